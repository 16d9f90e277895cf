#pragma once

#include <cstddef>
#include <vector>

namespace pscdn {

// Dense real-valued array with shape (channels, length), row-major
// channel-then-position order.
struct Tensor {
    int channels = 0;
    int length = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int channels_, int length_);
    Tensor(int channels_, int length_, std::vector<double> values);

    double& at(int c, int t) { return data[static_cast<std::size_t>(c) * length + t]; }
    double at(int c, int t) const { return data[static_cast<std::size_t>(c) * length + t]; }

    std::size_t size() const { return data.size(); }
    void fill(double v);
};

bool same_shape(const Tensor& a, const Tensor& b);

// Kernel weights for a 1-D convolution, laid out (out_ch, in_ch, kernel).
struct ConvKernel {
    int out_channels = 0;
    int in_channels = 0;
    int kernel_size = 0;
    std::vector<double> weights;  // out_ch * in_ch * kernel_size
    std::vector<double> bias;     // out_ch

    ConvKernel() = default;
    ConvKernel(int out_ch, int in_ch, int k);

    double& w(int o, int i, int k) {
        return weights[(static_cast<std::size_t>(o) * in_channels + i) * kernel_size + k];
    }
    double w(int o, int i, int k) const {
        return weights[(static_cast<std::size_t>(o) * in_channels + i) * kernel_size + k];
    }
};

struct ConvGradient {
    Tensor input_grad;
    std::vector<double> weight_grad;
    std::vector<double> bias_grad;
};

// Same-zero-padding 1-D convolution; output shape (out_ch, x.length).
Tensor conv1d(const Tensor& x, const ConvKernel& kernel);
ConvGradient conv1d_backward(const Tensor& x, const ConvKernel& kernel, const Tensor& upstream);

// Accumulating variant: adds weight/bias gradients into caller-owned buffers
// and input gradients into input_grad (which must be zeroed or hold a
// partial sum of the right shape). Avoids per-call allocations in training.
void conv1d_backward_acc(const Tensor& x, const ConvKernel& kernel, const Tensor& upstream,
                         double* weight_grad, double* bias_grad, Tensor& input_grad);

Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& upstream);

Tensor sigmoid(const Tensor& x);
// Backward from the forward output y = sigmoid(x): dx = y*(1-y)*upstream.
Tensor sigmoid_backward(const Tensor& y, const Tensor& upstream);

// Mini-batch statistics of one normalization pass, needed for backward.
struct BatchNormCache {
    std::vector<double> mean;     // per channel
    std::vector<double> var;      // per channel, biased (1/n)
    std::vector<double> inv_std;  // 1/sqrt(var + eps)
};

// Pure normalization per Eq.-style mini-batch standardization: no learned
// scale/shift. Statistics are taken per channel over batch and positions.
std::vector<Tensor> batch_norm(const std::vector<Tensor>& batch, double eps, BatchNormCache* cache = nullptr);
std::vector<Tensor> batch_norm_backward(const std::vector<Tensor>& batch, const BatchNormCache& cache,
                                        const std::vector<Tensor>& upstream);

// Inference-mode normalization against externally accumulated statistics.
Tensor batch_norm_eval(const Tensor& x, const std::vector<double>& running_mean,
                       const std::vector<double>& running_var, double eps);

Tensor concat_channels(const Tensor& a, const Tensor& b);
// Splits an upstream gradient of concat_channels back into the two inputs.
void concat_channels_backward(const Tensor& upstream, int a_channels, Tensor& grad_a, Tensor& grad_b);

Tensor residual_sub(const Tensor& input, const Tensor& estimate);

Tensor reshape(const Tensor& x, int channels, int length);

}  // namespace pscdn
