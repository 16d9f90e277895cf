#include "pscdn/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace pscdn {

Tensor::Tensor(int channels_, int length_)
    : channels(channels_), length(length_), data(static_cast<std::size_t>(channels_) * length_, 0.0) {
    if (channels_ <= 0 || length_ <= 0) {
        throw std::invalid_argument("Tensor dimensions must be positive");
    }
}

Tensor::Tensor(int channels_, int length_, std::vector<double> values)
    : channels(channels_), length(length_), data(std::move(values)) {
    if (channels_ <= 0 || length_ <= 0) {
        throw std::invalid_argument("Tensor dimensions must be positive");
    }
    if (data.size() != static_cast<std::size_t>(channels_) * length_) {
        throw std::invalid_argument("Tensor data size does not match shape");
    }
}

void Tensor::fill(double v) {
    for (auto& x : data) x = v;
}

bool same_shape(const Tensor& a, const Tensor& b) {
    return a.channels == b.channels && a.length == b.length;
}

ConvKernel::ConvKernel(int out_ch, int in_ch, int k)
    : out_channels(out_ch),
      in_channels(in_ch),
      kernel_size(k),
      weights(static_cast<std::size_t>(out_ch) * in_ch * k, 0.0),
      bias(out_ch, 0.0) {
    if (out_ch <= 0 || in_ch <= 0 || k <= 0) {
        throw std::invalid_argument("ConvKernel dimensions must be positive");
    }
    if (k % 2 == 0) {
        throw std::invalid_argument("ConvKernel kernel size must be odd");
    }
}

Tensor conv1d(const Tensor& x, const ConvKernel& kernel) {
    if (x.channels != kernel.in_channels) {
        throw std::invalid_argument("conv1d: input channel count does not match kernel");
    }
    const int half = (kernel.kernel_size - 1) / 2;
    const int L = x.length;
    Tensor out(kernel.out_channels, L);
    for (int o = 0; o < kernel.out_channels; ++o) {
        double* oo = &out.data[static_cast<std::size_t>(o) * L];
        for (int t = 0; t < L; ++t) oo[t] = kernel.bias[o];
        for (int i = 0; i < kernel.in_channels; ++i) {
            const double* xi = &x.data[static_cast<std::size_t>(i) * L];
            const double* wi = &kernel.weights[(static_cast<std::size_t>(o) * kernel.in_channels + i) *
                                               kernel.kernel_size];
            if (kernel.kernel_size == 1) {
                const double w0 = wi[0];
                for (int t = 0; t < L; ++t) oo[t] += w0 * xi[t];
            } else if (kernel.kernel_size == 3) {
                const double w0 = wi[0], w1 = wi[1], w2 = wi[2];
                if (L == 1) {
                    oo[0] += w1 * xi[0];
                } else {
                    oo[0] += w1 * xi[0] + w2 * xi[1];
                    for (int t = 1; t < L - 1; ++t) {
                        oo[t] += w0 * xi[t - 1] + w1 * xi[t] + w2 * xi[t + 1];
                    }
                    oo[L - 1] += w0 * xi[L - 2] + w1 * xi[L - 1];
                }
            } else {
                for (int t = 0; t < L; ++t) {
                    const int k_lo = std::max(0, half - t);
                    const int k_hi = std::min(kernel.kernel_size, L + half - t);
                    double acc = 0.0;
                    for (int k = k_lo; k < k_hi; ++k) acc += wi[k] * xi[t + k - half];
                    oo[t] += acc;
                }
            }
        }
    }
    return out;
}

void conv1d_backward_acc(const Tensor& x, const ConvKernel& kernel, const Tensor& upstream,
                         double* weight_grad, double* bias_grad, Tensor& input_grad) {
    if (x.channels != kernel.in_channels) {
        throw std::invalid_argument("conv1d_backward: input channel count does not match kernel");
    }
    if (upstream.channels != kernel.out_channels || upstream.length != x.length) {
        throw std::invalid_argument("conv1d_backward: upstream shape mismatch");
    }
    const int half = (kernel.kernel_size - 1) / 2;
    const int L = x.length;
    for (int o = 0; o < kernel.out_channels; ++o) {
        const double* up = &upstream.data[static_cast<std::size_t>(o) * L];
        double bsum = 0.0;
        for (int t = 0; t < L; ++t) bsum += up[t];
        bias_grad[o] += bsum;
        for (int i = 0; i < kernel.in_channels; ++i) {
            const double* xi = &x.data[static_cast<std::size_t>(i) * L];
            double* gi = &input_grad.data[static_cast<std::size_t>(i) * L];
            const std::size_t w_base =
                (static_cast<std::size_t>(o) * kernel.in_channels + i) * kernel.kernel_size;
            const double* wi = &kernel.weights[w_base];
            double* wg = &weight_grad[w_base];
            if (kernel.kernel_size == 1) {
                const double w0 = wi[0];
                double g0 = 0.0;
                for (int t = 0; t < L; ++t) {
                    g0 += up[t] * xi[t];
                    gi[t] += up[t] * w0;
                }
                wg[0] += g0;
            } else if (kernel.kernel_size == 3) {
                const double w0 = wi[0], w1 = wi[1], w2 = wi[2];
                double g0 = 0.0, g1 = 0.0, g2 = 0.0;
                if (L == 1) {
                    g1 += up[0] * xi[0];
                    gi[0] += up[0] * w1;
                } else {
                    // t = 0 (no left neighbor)
                    g1 += up[0] * xi[0];
                    g2 += up[0] * xi[1];
                    gi[0] += up[0] * w1;
                    gi[1] += up[0] * w2;
                    for (int t = 1; t < L - 1; ++t) {
                        const double u = up[t];
                        g0 += u * xi[t - 1];
                        g1 += u * xi[t];
                        g2 += u * xi[t + 1];
                        gi[t - 1] += u * w0;
                        gi[t] += u * w1;
                        gi[t + 1] += u * w2;
                    }
                    const double u = up[L - 1];
                    g0 += u * xi[L - 2];
                    g1 += u * xi[L - 1];
                    gi[L - 2] += u * w0;
                    gi[L - 1] += u * w1;
                }
                wg[0] += g0;
                wg[1] += g1;
                wg[2] += g2;
            } else {
                for (int t = 0; t < L; ++t) {
                    const int k_lo = std::max(0, half - t);
                    const int k_hi = std::min(kernel.kernel_size, L + half - t);
                    for (int k = k_lo; k < k_hi; ++k) {
                        const int src = t + k - half;
                        wg[k] += up[t] * xi[src];
                        gi[src] += up[t] * wi[k];
                    }
                }
            }
        }
    }
}

ConvGradient conv1d_backward(const Tensor& x, const ConvKernel& kernel, const Tensor& upstream) {
    ConvGradient g;
    g.input_grad = Tensor(x.channels, x.length);
    g.weight_grad.assign(kernel.weights.size(), 0.0);
    g.bias_grad.assign(kernel.bias.size(), 0.0);
    conv1d_backward_acc(x, kernel, upstream, g.weight_grad.data(), g.bias_grad.data(), g.input_grad);
    return g;
}

Tensor relu(const Tensor& x) {
    Tensor out = x;
    for (auto& v : out.data) {
        if (v < 0.0) v = 0.0;
    }
    return out;
}

Tensor relu_backward(const Tensor& x, const Tensor& upstream) {
    if (!same_shape(x, upstream)) {
        throw std::invalid_argument("relu_backward: shape mismatch");
    }
    Tensor out(x.channels, x.length);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        out.data[i] = x.data[i] > 0.0 ? upstream.data[i] : 0.0;
    }
    return out;
}

Tensor sigmoid(const Tensor& x) {
    Tensor out(x.channels, x.length);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        out.data[i] = 1.0 / (1.0 + std::exp(-x.data[i]));
    }
    return out;
}

Tensor sigmoid_backward(const Tensor& y, const Tensor& upstream) {
    if (!same_shape(y, upstream)) {
        throw std::invalid_argument("sigmoid_backward: shape mismatch");
    }
    Tensor out(y.channels, y.length);
    for (std::size_t i = 0; i < y.data.size(); ++i) {
        out.data[i] = upstream.data[i] * y.data[i] * (1.0 - y.data[i]);
    }
    return out;
}

std::vector<Tensor> batch_norm(const std::vector<Tensor>& batch, double eps, BatchNormCache* cache) {
    if (batch.size() < 2) {
        throw std::invalid_argument("batch_norm: training-mode statistics need batch size >= 2");
    }
    const int channels = batch.front().channels;
    const int length = batch.front().length;
    for (const auto& t : batch) {
        if (t.channels != channels || t.length != length) {
            throw std::invalid_argument("batch_norm: heterogeneous batch shapes");
        }
    }
    const double n = static_cast<double>(batch.size()) * length;
    std::vector<double> mean(channels, 0.0), var(channels, 0.0), inv_std(channels, 0.0);
    for (const auto& t : batch) {
        for (int c = 0; c < channels; ++c) {
            for (int p = 0; p < length; ++p) mean[c] += t.at(c, p);
        }
    }
    for (int c = 0; c < channels; ++c) mean[c] /= n;
    for (const auto& t : batch) {
        for (int c = 0; c < channels; ++c) {
            for (int p = 0; p < length; ++p) {
                const double d = t.at(c, p) - mean[c];
                var[c] += d * d;
            }
        }
    }
    for (int c = 0; c < channels; ++c) {
        var[c] /= n;
        inv_std[c] = 1.0 / std::sqrt(var[c] + eps);
    }
    std::vector<Tensor> out;
    out.reserve(batch.size());
    for (const auto& t : batch) {
        Tensor r(channels, length);
        for (int c = 0; c < channels; ++c) {
            for (int p = 0; p < length; ++p) {
                r.at(c, p) = (t.at(c, p) - mean[c]) * inv_std[c];
            }
        }
        out.push_back(std::move(r));
    }
    if (cache != nullptr) {
        cache->mean = std::move(mean);
        cache->var = std::move(var);
        cache->inv_std = std::move(inv_std);
    }
    return out;
}

std::vector<Tensor> batch_norm_backward(const std::vector<Tensor>& batch, const BatchNormCache& cache,
                                        const std::vector<Tensor>& upstream) {
    if (batch.size() != upstream.size()) {
        throw std::invalid_argument("batch_norm_backward: batch/upstream size mismatch");
    }
    const int channels = batch.front().channels;
    const int length = batch.front().length;
    const double n = static_cast<double>(batch.size()) * length;
    // Standard backward for x_hat = (x - mu) * inv_std with mu, var batch
    // statistics: dx = inv_std * (du - mean(du) - x_hat * mean(du * x_hat)).
    std::vector<double> sum_du(channels, 0.0), sum_du_xhat(channels, 0.0);
    for (std::size_t b = 0; b < batch.size(); ++b) {
        for (int c = 0; c < channels; ++c) {
            for (int p = 0; p < length; ++p) {
                const double xhat = (batch[b].at(c, p) - cache.mean[c]) * cache.inv_std[c];
                sum_du[c] += upstream[b].at(c, p);
                sum_du_xhat[c] += upstream[b].at(c, p) * xhat;
            }
        }
    }
    std::vector<Tensor> out;
    out.reserve(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
        Tensor r(channels, length);
        for (int c = 0; c < channels; ++c) {
            for (int p = 0; p < length; ++p) {
                const double xhat = (batch[b].at(c, p) - cache.mean[c]) * cache.inv_std[c];
                r.at(c, p) = cache.inv_std[c] *
                             (upstream[b].at(c, p) - sum_du[c] / n - xhat * sum_du_xhat[c] / n);
            }
        }
        out.push_back(std::move(r));
    }
    return out;
}

Tensor batch_norm_eval(const Tensor& x, const std::vector<double>& running_mean,
                       const std::vector<double>& running_var, double eps) {
    if (static_cast<int>(running_mean.size()) != x.channels ||
        static_cast<int>(running_var.size()) != x.channels) {
        throw std::invalid_argument("batch_norm_eval: statistics size mismatch");
    }
    Tensor out(x.channels, x.length);
    for (int c = 0; c < x.channels; ++c) {
        const double inv_std = 1.0 / std::sqrt(running_var[c] + eps);
        for (int p = 0; p < x.length; ++p) {
            out.at(c, p) = (x.at(c, p) - running_mean[c]) * inv_std;
        }
    }
    return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.channels == 0) return b;
    if (b.channels == 0) return a;
    if (a.length != b.length) {
        throw std::invalid_argument("concat_channels: length mismatch");
    }
    Tensor out(a.channels + b.channels, a.length);
    std::copy(a.data.begin(), a.data.end(), out.data.begin());
    std::copy(b.data.begin(), b.data.end(), out.data.begin() + a.data.size());
    return out;
}

void concat_channels_backward(const Tensor& upstream, int a_channels, Tensor& grad_a, Tensor& grad_b) {
    if (a_channels <= 0 || a_channels >= upstream.channels) {
        throw std::invalid_argument("concat_channels_backward: bad split point");
    }
    grad_a = Tensor(a_channels, upstream.length);
    grad_b = Tensor(upstream.channels - a_channels, upstream.length);
    const std::size_t split = static_cast<std::size_t>(a_channels) * upstream.length;
    std::copy(upstream.data.begin(), upstream.data.begin() + split, grad_a.data.begin());
    std::copy(upstream.data.begin() + split, upstream.data.end(), grad_b.data.begin());
}

Tensor residual_sub(const Tensor& input, const Tensor& estimate) {
    if (!same_shape(input, estimate)) {
        throw std::invalid_argument("residual_sub: shape mismatch");
    }
    Tensor out(input.channels, input.length);
    for (std::size_t i = 0; i < input.data.size(); ++i) {
        out.data[i] = input.data[i] - estimate.data[i];
    }
    return out;
}

Tensor reshape(const Tensor& x, int channels, int length) {
    if (static_cast<std::size_t>(channels) * length != x.data.size()) {
        throw std::invalid_argument("reshape: element count mismatch");
    }
    return Tensor(channels, length, x.data);
}

}  // namespace pscdn
