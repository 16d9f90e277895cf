#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <random>

#include "pscdn/channel.hpp"
#include "pscdn/model.hpp"
#include "pscdn/train.hpp"
#include "test_util.hpp"

using namespace pscdn;

TEST_CASE("encoder builds 4 conv layers and is undercomplete") {
    auto enc = build_encoder(9, 8, 2);
    CHECK(conv_layer_count(enc) == 4);
    CHECK_THROWS_AS((build_encoder(9, 8, 9)), std::invalid_argument);
    CHECK_THROWS_AS((build_encoder(9, 8, 0)), std::invalid_argument);
}

TEST_CASE("decoder builds 11 conv layers for both variants") {
    CHECK(conv_layer_count(build_decoder(9, 8, 2, true)) == 11);
    CHECK(conv_layer_count(build_decoder(9, 8, 2, false)) == 11);
}

TEST_CASE("encoder output shape is (C,1) and decoder output (1,K) in (0,1)") {
    for (int C : {2, 3, 4, 5}) {
        NetworkSpec spec = build_pscdn(9, 6, C);
        Model model(spec, init_parameters(spec, 42));
        auto data = generate_dataset(5, 9, 7);
        std::vector<Tensor> inputs;
        for (const auto& s : data) inputs.push_back(sample_to_tensor(s));
        auto codes = model.encode(inputs, Mode::Eval);
        for (const auto& c : codes) {
            CHECK(c.channels == C);
            CHECK(c.length == 1);
        }
        auto out = model.decode(codes, Mode::Eval);
        for (const auto& o : out) {
            CHECK(o.channels == 1);
            CHECK(o.length == 9);
            for (double v : o.data) {
                CHECK(v > 0.0);
                CHECK(v < 1.0);
            }
        }
    }
}

TEST_CASE("PSCN variant batch-norm counts") {
    CHECK(batch_norm_layer_count(build_pscn_variant('a', 9, 6, 2)) == 0);
    CHECK(batch_norm_layer_count(build_pscn_variant('b', 9, 6, 2)) == 1);
    CHECK(batch_norm_layer_count(build_pscn_variant('c', 9, 6, 2)) == 2);
    CHECK(batch_norm_layer_count(build_pscn_variant('d', 9, 6, 2)) == 3);
    CHECK(batch_norm_layer_count(build_pscn_variant('e', 9, 6, 2)) == 4);
    CHECK(batch_norm_layer_count(build_pscn_variant('f', 9, 6, 2)) == 15);
    CHECK_THROWS_AS((build_pscn_variant('g', 9, 6, 2)), std::invalid_argument);
}

TEST_CASE("layer-count audit across variants and CRs") {
    for (char v = 'a'; v <= 'f'; ++v) {
        for (int C : {2, 3, 4, 5}) {
            NetworkSpec spec = build_pscn_variant(v, 9, 6, C);
            CHECK(conv_layer_count(spec.encoder_layers) == 4);
            CHECK(conv_layer_count(spec.decoder_layers) == 11);
            CHECK(spec.C < spec.K);
        }
    }
}

TEST_CASE("PSCDN minus denoising module matches PSCN(a) trunk") {
    NetworkSpec pscdn = build_pscdn(9, 6, 2);
    NetworkSpec pscn = build_pscn_variant('a', 9, 6, 2);
    CHECK(pscdn.encoder_layers.size() == pscn.encoder_layers.size());
    // decoder: drop the feature conv and the kernel-1 estimate conv, then the
    // remaining trunk (8x ConvReLU + ConvSigmoid + Reshape) matches the tail
    // of PSCN(a)'s decoder.
    std::vector<LayerSpec> trunk(pscdn.decoder_layers.begin() + 2, pscdn.decoder_layers.end());
    std::vector<LayerSpec> tail(pscn.decoder_layers.end() - trunk.size(), pscn.decoder_layers.end());
    REQUIRE(trunk.size() == tail.size());
    for (std::size_t i = 0; i < trunk.size(); ++i) {
        CHECK(trunk[i].kind == tail[i].kind);
        CHECK(trunk[i].kernel_size == tail[i].kernel_size);
        CHECK(trunk[i].out_channels == tail[i].out_channels);
    }
}

TEST_CASE("count_parameters formula") {
    // single conv: in 2, out 4, k3 -> 2*3*4 + 4 = 28; check via a tiny spec diff
    NetworkSpec spec = build_pscdn(9, 4, 2);
    long total = 0;
    ParameterStore store = init_parameters(spec, 1);
    for (const auto& lp : store.layers) {
        total += static_cast<long>(lp.kernel.weights.size() + lp.kernel.bias.size());
    }
    CHECK(count_parameters(spec) == total);
    // kernel-1 code layer: in = K*N = 36, out = 2 -> 72 + 2 = 74
    const auto& code_layer = store.layers[3];
    CHECK(code_layer.kernel.in_channels == 36);
    CHECK(code_layer.kernel.weights.size() + code_layer.kernel.bias.size() == 74);
}

TEST_CASE("default PSCDN parameter count near the reference size") {
    NetworkSpec spec = build_pscdn(9, 56, 2);
    const long n = count_parameters(spec);
    CHECK(std::abs(n - 85699L) <= 8570);
}

TEST_CASE("init_parameters determinism and spread") {
    NetworkSpec spec = build_pscdn(9, 56, 2);
    ParameterStore a = init_parameters(spec, 5);
    ParameterStore b = init_parameters(spec, 5);
    ParameterStore c = init_parameters(spec, 6);
    bool all_equal = true, any_diff = false;
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        if (a.layers[l].kernel.weights != b.layers[l].kernel.weights) all_equal = false;
        if (a.layers[l].kernel.weights != c.layers[l].kernel.weights) any_diff = true;
    }
    CHECK(all_equal);
    CHECK(any_diff);
    // sample variance of a big layer stays within the fan-scaled band
    // spanned by the Glorot and effective-fan He targets
    for (const auto& lp : a.layers) {
        if (lp.kernel.weights.size() < 100) continue;
        double mean = 0.0, var = 0.0;
        for (double w : lp.kernel.weights) mean += w;
        mean /= static_cast<double>(lp.kernel.weights.size());
        for (double w : lp.kernel.weights) var += (w - mean) * (w - mean);
        var /= static_cast<double>(lp.kernel.weights.size());
        const double fan_in = static_cast<double>(lp.kernel.in_channels) * lp.kernel.kernel_size;
        const double fan_out = static_cast<double>(lp.kernel.out_channels) * lp.kernel.kernel_size;
        const double lo = 0.5 * 2.0 / (fan_in + fan_out);  // below Glorot
        const double hi = 2.0 * 2.0 / std::min(fan_in, fan_out) * 3.0;  // above He w/ effective fan
        CHECK(var >= lo);
        CHECK(var <= hi);
    }
}

TEST_CASE("eval-mode forward is deterministic") {
    NetworkSpec spec = build_pscn_variant('f', 9, 6, 3);
    Model model(spec, init_parameters(spec, 9));
    auto data = generate_dataset(4, 9, 13);
    std::vector<Tensor> inputs;
    for (const auto& s : data) inputs.push_back(sample_to_tensor(s));
    auto out1 = model.decode(model.encode(inputs, Mode::Eval), Mode::Eval);
    auto out2 = model.decode(model.encode(inputs, Mode::Eval), Mode::Eval);
    for (std::size_t b = 0; b < out1.size(); ++b) CHECK(out1[b].data == out2[b].data);
}

namespace {

// Loss of the full autoencoder with frozen channel noise, as a function of
// the current parameters.
double whole_network_loss(Model& model, const std::vector<Tensor>& inputs,
                          const std::vector<Tensor>& noise, double g) {
    auto codes = model.encode(inputs, Mode::Train);
    for (std::size_t b = 0; b < codes.size(); ++b) {
        for (std::size_t i = 0; i < codes[b].data.size(); ++i) {
            codes[b].data[i] = g * codes[b].data[i] + noise[b].data[i];
        }
    }
    auto out = model.decode(codes, Mode::Train);
    return mse_loss(out, inputs);
}

void check_whole_network_gradients(const NetworkSpec& spec, std::uint64_t seed) {
    // Zero-initialized biases leave the length-1 decoder trunk contracting
    // toward the ReLU kink (pre-activations down to ~1e-9), where central
    // differences disagree with any valid subgradient; small random biases
    // keep every unit a safe distance from the kink.
    ParameterStore params = init_parameters(spec, seed);
    std::mt19937_64 brng(seed + 9);
    std::uniform_real_distribution<double> bdist(-0.05, 0.05);
    for (auto& lp : params.layers) {
        for (auto& b : lp.kernel.bias) b = bdist(brng);
    }
    Model model(spec, std::move(params));
    std::mt19937_64 rng(seed + 1);
    // continuous inputs: exact 0/1 bits can park a ReLU pre-activation
    // exactly on its kink (zero window + zero bias)
    std::vector<Tensor> inputs;
    for (int b = 0; b < 4; ++b) inputs.push_back(testutil::random_tensor(1, spec.K, rng, 0.05, 0.95));
    std::vector<Tensor> noise;
    for (int b = 0; b < 4; ++b) noise.push_back(testutil::random_tensor(spec.C, 1, rng, -0.1, 0.1));
    const double g = 1.0;

    // analytic gradients
    EncoderCache enc_cache;
    DecoderCache dec_cache;
    auto codes = model.encode(inputs, Mode::Train, &enc_cache);
    std::vector<Tensor> noisy = codes;
    for (std::size_t b = 0; b < noisy.size(); ++b) {
        for (std::size_t i = 0; i < noisy[b].data.size(); ++i) {
            noisy[b].data[i] = g * noisy[b].data[i] + noise[b].data[i];
        }
    }
    auto out = model.decode(noisy, Mode::Train, &dec_cache);
    std::vector<Tensor> dout;
    mse_loss(out, inputs, &dout);
    GradStore grads(model.params());
    auto d_noisy = model.decode_backward(dec_cache, dout, grads);
    model.encode_backward(enc_cache, d_noisy, grads);

    // BN running statistics drift across forward passes; freeze them so the
    // finite-difference objective is a pure function of the parameters.
    auto objective = [&]() {
        Model probe(model.spec(), model.params());
        return whole_network_loss(probe, inputs, noise, g);
    };
    for (std::size_t l = 0; l < model.params().layers.size(); ++l) {
        auto& lp = model.params().layers[l];
        // 5e-4 leaves headroom for central-difference truncation error through
        // the batch-norm curvature at h = 1e-5.
        auto nw = testutil::numeric_gradient(lp.kernel.weights, objective, 1e-5);
        for (std::size_t i = 0; i < nw.size(); ++i) {
            CHECK(testutil::grad_error(grads.layers[l].weight_grad[i], nw[i], 1e-7) <= 5e-4);
        }
        auto nb = testutil::numeric_gradient(lp.kernel.bias, objective, 1e-5);
        for (std::size_t i = 0; i < nb.size(); ++i) {
            CHECK(testutil::grad_error(grads.layers[l].bias_grad[i], nb[i], 1e-7) <= 5e-4);
        }
    }
}

}  // namespace

TEST_CASE("whole-network gradient check, tiny PSCDN") {
    check_whole_network_gradients(build_pscdn(4, 4, 2), 101);
}

TEST_CASE("whole-network gradient check, tiny PSCN with batch norm") {
    check_whole_network_gradients(build_pscn_variant('c', 4, 4, 2), 202);
}
