#pragma once

#include <complex>
#include <cstdint>
#include <random>
#include <vector>

#include "pscdn/tensor.hpp"

namespace pscdn {

// One reflecting element's phase as quantization index, K-bit vector
// (MSB first) and radian value on the 2^K uniform grid.
struct PhaseSample {
    std::uint32_t index = 0;
    std::vector<std::uint8_t> bits;
    double radians = 0.0;
};

PhaseSample quantize_phase(double theta, int K);
double phase_from_bits(const std::vector<std::uint8_t>& bits);
std::vector<std::uint8_t> bits_from_index(std::uint32_t index, int K);

std::vector<PhaseSample> generate_dataset(std::size_t count, int K, std::uint64_t seed);

// (1,K) network input holding a sample's bits as real values in {0,1}.
Tensor sample_to_tensor(const PhaseSample& s);
std::vector<std::uint8_t> hard_decision(const Tensor& reconstruction);

// Feedback channel y = g * code + n. By default the AWGN variance is set by
// SNR against a fixed unit reference power, sigma^2 = 10^(-snr_db/10); the
// encoder is free to learn code amplitudes against that floor. Setting
// empirical_power instead references the per-batch mean-square code power,
// which pins the true per-entry SNR at snr_db regardless of code scale.
struct ChannelConfig {
    double g = 1.0;
    double snr_db = 10.0;
    bool noiseless = false;
    bool empirical_power = false;
};

std::vector<Tensor> awgn_channel(const std::vector<Tensor>& codes, const ChannelConfig& cfg,
                                 std::mt19937_64& rng);
double noise_variance(const std::vector<Tensor>& codes, const ChannelConfig& cfg);

// One draw of the IRS link of the received-signal model.
struct LinkRealization {
    std::vector<std::complex<double>> h_sr;
    std::vector<std::complex<double>> h_rd;
    std::complex<double> h_sd;
    double rho = 1.0;
    double power = 1.0;      // transmit power, linear
    double sigma_d2 = 1.0;   // receiver noise variance
};

LinkRealization random_link(int elements, std::uint64_t seed);

double optimal_phase(const LinkRealization& link, int m);
std::complex<double> received_signal(const LinkRealization& link, const std::vector<double>& phases,
                                     std::complex<double> symbol, std::complex<double> noise);

}  // namespace pscdn
