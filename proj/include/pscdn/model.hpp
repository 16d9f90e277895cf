#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pscdn/tensor.hpp"

namespace pscdn {

enum class LayerKind { Conv, ConvReLU, ConvSigmoid, Reshape };

struct LayerSpec {
    LayerKind kind = LayerKind::Conv;
    int kernel_size = 0;   // 0 for Reshape
    int out_channels = 0;  // 0 for Reshape
    bool batch_norm = false;
};

// Declarative description of one autoencoder instance. The encoder maps a
// (1,K) bit vector to a (C,1) code; the decoder reconstructs (1,K) from a
// possibly noise-corrupted code.
struct NetworkSpec {
    int K = 0;  // bits per phase (input dimension)
    int C = 0;  // code dimension
    int N = 0;  // filter count
    char bn_variant = 0;  // 'a'..'f' for PSCN ablation variants, 0 otherwise
    bool denoising = false;
    std::vector<LayerSpec> encoder_layers;
    std::vector<LayerSpec> decoder_layers;
};

struct LayerParams {
    std::string id;
    ConvKernel kernel;
    bool has_batch_norm = false;
    std::vector<double> bn_running_mean;
    std::vector<double> bn_running_var;
};

// Ordered parameters of every parametric (convolutional) layer, encoder
// first, then decoder. Reshape layers carry no entry.
struct ParameterStore {
    std::vector<LayerParams> layers;
};

// Gradient accumulator mirroring a ParameterStore.
struct GradStore {
    struct Entry {
        std::vector<double> weight_grad;
        std::vector<double> bias_grad;
    };
    std::vector<Entry> layers;

    explicit GradStore(const ParameterStore& params);
    void zero();
};

std::vector<LayerSpec> build_encoder(int K, int N, int C);
std::vector<LayerSpec> build_decoder(int K, int N, int C, bool denoising);
NetworkSpec build_pscdn(int K, int N, int C);
NetworkSpec build_pscn_variant(char variant, int K, int N, int C);

// Builds a spec from a model name: "pscdn" or "pscn-a".."pscn-f".
NetworkSpec build_model(const std::string& name, int K, int N, int C);

long count_parameters(const NetworkSpec& spec);
int conv_layer_count(const std::vector<LayerSpec>& layers);
int batch_norm_layer_count(const NetworkSpec& spec);

ParameterStore init_parameters(const NetworkSpec& spec, std::uint64_t seed);

enum class Mode { Train, Eval };

namespace detail {
struct LayerCache {
    std::vector<Tensor> input;
    std::vector<Tensor> conv_out;
    BatchNormCache bn;
    std::vector<Tensor> bn_out;
    std::vector<Tensor> act_out;
};
}  // namespace detail

struct EncoderCache {
    std::vector<detail::LayerCache> layers;
};

struct DecoderCache {
    std::vector<detail::LayerCache> layers;
    // Denoising-module intermediates (empty when spec.denoising is false).
    std::vector<Tensor> noisy_code;
    std::vector<Tensor> concat_in;
    std::vector<Tensor> noise_estimate;
    std::vector<Tensor> denoised;
};

// Runtime binding of a spec and its parameters. Forward passes are split at
// the code boundary so the feedback channel can be inserted in between.
class Model {
  public:
    Model(NetworkSpec spec, ParameterStore params);

    const NetworkSpec& spec() const { return spec_; }
    const ParameterStore& params() const { return params_; }
    ParameterStore& params() { return params_; }

    std::vector<Tensor> encode(const std::vector<Tensor>& inputs, Mode mode,
                               EncoderCache* cache = nullptr);
    std::vector<Tensor> decode(const std::vector<Tensor>& noisy_codes, Mode mode,
                               DecoderCache* cache = nullptr);

    // Backward passes accumulate parameter gradients into `grads` and return
    // the gradient with respect to the stage input.
    std::vector<Tensor> decode_backward(const DecoderCache& cache, const std::vector<Tensor>& upstream,
                                        GradStore& grads);
    std::vector<Tensor> encode_backward(const EncoderCache& cache, const std::vector<Tensor>& upstream,
                                        GradStore& grads);

    double bn_eps() const { return bn_eps_; }

  private:
    NetworkSpec spec_;
    ParameterStore params_;
    double bn_eps_ = 1e-5;
    double bn_momentum_ = 0.9;
    int encoder_param_offset_ = 0;  // 0: encoder entries start the store
    int decoder_param_offset_ = 0;
};

}  // namespace pscdn
