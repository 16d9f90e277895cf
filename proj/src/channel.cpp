#include "pscdn/channel.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace pscdn {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

std::vector<std::uint8_t> bits_from_index(std::uint32_t index, int K) {
    std::vector<std::uint8_t> bits(K, 0);
    for (int i = 0; i < K; ++i) {
        bits[i] = static_cast<std::uint8_t>((index >> (K - 1 - i)) & 1u);
    }
    return bits;
}

PhaseSample quantize_phase(double theta, int K) {
    if (K < 1 || K > 30) throw std::invalid_argument("quantize_phase: K out of range");
    if (!std::isfinite(theta)) throw std::invalid_argument("quantize_phase: non-finite phase");
    const std::uint32_t levels = 1u << K;
    const double step = kTwoPi / levels;
    double wrapped = std::fmod(theta, kTwoPi);
    if (wrapped < 0.0) wrapped += kTwoPi;
    // round half up, then wrap back onto the grid
    auto index = static_cast<std::uint32_t>(std::floor(wrapped / step + 0.5)) % levels;
    PhaseSample s;
    s.index = index;
    s.bits = bits_from_index(index, K);
    s.radians = index * step;
    return s;
}

double phase_from_bits(const std::vector<std::uint8_t>& bits) {
    if (bits.empty() || bits.size() > 30) throw std::invalid_argument("phase_from_bits: bad bit count");
    std::uint32_t index = 0;
    for (auto b : bits) {
        if (b > 1) throw std::invalid_argument("phase_from_bits: non-binary entry");
        index = (index << 1) | b;
    }
    return index * (kTwoPi / (1u << bits.size()));
}

std::vector<PhaseSample> generate_dataset(std::size_t count, int K, std::uint64_t seed) {
    if (count < 1) throw std::invalid_argument("generate_dataset: count must be >= 1");
    if (K < 1 || K > 30) throw std::invalid_argument("generate_dataset: K out of range");
    const std::uint32_t levels = 1u << K;
    const double step = kTwoPi / levels;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::uint32_t> dist(0, levels - 1);
    std::vector<PhaseSample> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        PhaseSample s;
        s.index = dist(rng);
        s.bits = bits_from_index(s.index, K);
        s.radians = s.index * step;
        out.push_back(std::move(s));
    }
    return out;
}

Tensor sample_to_tensor(const PhaseSample& s) {
    Tensor t(1, static_cast<int>(s.bits.size()));
    for (std::size_t i = 0; i < s.bits.size(); ++i) t.data[i] = s.bits[i];
    return t;
}

std::vector<std::uint8_t> hard_decision(const Tensor& reconstruction) {
    std::vector<std::uint8_t> bits(reconstruction.data.size());
    for (std::size_t i = 0; i < bits.size(); ++i) {
        bits[i] = reconstruction.data[i] >= 0.5 ? 1 : 0;
    }
    return bits;
}

double noise_variance(const std::vector<Tensor>& codes, const ChannelConfig& cfg) {
    if (cfg.noiseless) return 0.0;
    double power = 1.0;
    if (cfg.empirical_power) {
        power = 0.0;
        std::size_t n = 0;
        for (const auto& c : codes) {
            for (double v : c.data) power += v * v;
            n += c.data.size();
        }
        if (n == 0) throw std::invalid_argument("noise_variance: empty batch");
        power /= static_cast<double>(n);
        if (power <= 0.0) {
            // degenerate all-zero code: SNR is undefined, transmit without noise
            return 0.0;
        }
    }
    return power * std::pow(10.0, -cfg.snr_db / 10.0);
}

std::vector<Tensor> awgn_channel(const std::vector<Tensor>& codes, const ChannelConfig& cfg,
                                 std::mt19937_64& rng) {
    const double sigma2 = noise_variance(codes, cfg);
    const double sigma = std::sqrt(sigma2);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<Tensor> out;
    out.reserve(codes.size());
    for (const auto& c : codes) {
        Tensor y(c.channels, c.length);
        for (std::size_t i = 0; i < c.data.size(); ++i) {
            double n = sigma > 0.0 ? sigma * gauss(rng) : 0.0;
            if (!std::isfinite(c.data[i])) throw std::invalid_argument("awgn_channel: non-finite code");
            y.data[i] = cfg.g * c.data[i] + n;
        }
        out.push_back(std::move(y));
    }
    return out;
}

LinkRealization random_link(int elements, std::uint64_t seed) {
    if (elements < 1) throw std::invalid_argument("random_link: need at least one element");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, std::sqrt(0.5));
    auto draw = [&rng, &gauss]() { return std::complex<double>(gauss(rng), gauss(rng)); };
    LinkRealization link;
    link.h_sr.resize(elements);
    link.h_rd.resize(elements);
    for (int m = 0; m < elements; ++m) link.h_sr[m] = draw();
    for (int m = 0; m < elements; ++m) link.h_rd[m] = draw();
    link.h_sd = draw();
    return link;
}

double optimal_phase(const LinkRealization& link, int m) {
    if (m < 0 || m >= static_cast<int>(link.h_sr.size())) {
        throw std::invalid_argument("optimal_phase: element index out of range");
    }
    const std::complex<double> cascade = link.h_sr[m] * link.h_rd[m];
    if (cascade == std::complex<double>(0.0, 0.0) || link.h_sd == std::complex<double>(0.0, 0.0)) {
        throw std::invalid_argument("optimal_phase: undefined argument for zero channel entry");
    }
    double theta = std::arg(link.h_sd) - std::arg(cascade);
    theta = std::fmod(theta, kTwoPi);
    if (theta < 0.0) theta += kTwoPi;
    return theta;
}

std::complex<double> received_signal(const LinkRealization& link, const std::vector<double>& phases,
                                     std::complex<double> symbol, std::complex<double> noise) {
    if (phases.size() != link.h_sr.size() || phases.size() != link.h_rd.size()) {
        throw std::invalid_argument("received_signal: phase vector dimension mismatch");
    }
    const double sqrt_p = std::sqrt(link.power);
    std::complex<double> reflected(0.0, 0.0);
    for (std::size_t m = 0; m < phases.size(); ++m) {
        reflected += link.h_rd[m] * std::polar(link.rho, phases[m]) * link.h_sr[m];
    }
    return sqrt_p * reflected * symbol + sqrt_p * link.h_sd * symbol + noise;
}

}  // namespace pscdn
