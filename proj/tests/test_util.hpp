#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "pscdn/tensor.hpp"

namespace testutil {

// Independent triple-loop sliding-window oracle for same-zero-padding
// 1-D convolution; kept deliberately naive.
inline pscdn::Tensor conv1d_bruteforce(const pscdn::Tensor& x, const pscdn::ConvKernel& kernel) {
    const int half = (kernel.kernel_size - 1) / 2;
    pscdn::Tensor out(kernel.out_channels, x.length);
    for (int o = 0; o < kernel.out_channels; ++o) {
        for (int t = 0; t < x.length; ++t) {
            double acc = kernel.bias[o];
            for (int i = 0; i < kernel.in_channels; ++i) {
                for (int k = 0; k < kernel.kernel_size; ++k) {
                    const int src = t + k - half;
                    const double xv = (src >= 0 && src < x.length) ? x.at(i, src) : 0.0;
                    acc += kernel.w(o, i, k) * xv;
                }
            }
            out.at(o, t) = acc;
        }
    }
    return out;
}

// Central finite differences of a scalar-valued function over a flat
// parameter vector.
inline std::vector<double> numeric_gradient(std::vector<double>& values,
                                            const std::function<double()>& f, double h = 1e-6) {
    std::vector<double> grad(values.size(), 0.0);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double saved = values[i];
        values[i] = saved + h;
        const double up = f();
        values[i] = saved - h;
        const double down = f();
        values[i] = saved;
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

// Relative error with an absolute floor for near-zero gradients.
inline double grad_error(double analytic, double numeric, double abs_floor = 1e-8) {
    const double diff = std::abs(analytic - numeric);
    const double scale = std::max({std::abs(analytic), std::abs(numeric), abs_floor});
    return diff / scale;
}

inline pscdn::Tensor random_tensor(int channels, int length, std::mt19937_64& rng, double lo = -2.0,
                                   double hi = 2.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    pscdn::Tensor t(channels, length);
    for (auto& v : t.data) v = dist(rng);
    return t;
}

inline pscdn::ConvKernel random_kernel(int out_ch, int in_ch, int k, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    pscdn::ConvKernel kernel(out_ch, in_ch, k);
    for (auto& w : kernel.weights) w = dist(rng);
    for (auto& b : kernel.bias) b = dist(rng);
    return kernel;
}

}  // namespace testutil
