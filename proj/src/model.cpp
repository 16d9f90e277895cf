#include "pscdn/model.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace pscdn {

namespace {

struct ConvPlanEntry {
    int layer_index = 0;  // index into the LayerSpec list
    int in_channels = 0;
    int out_channels = 0;
    int kernel_size = 0;
    int in_length = 0;  // spatial length seen by this layer
    LayerKind kind = LayerKind::Conv;
    bool batch_norm = false;
};

void validate_dims(int K, int N, int C) {
    if (K < 2) throw std::invalid_argument("K must be >= 2");
    if (N < 1) throw std::invalid_argument("N must be >= 1");
    if (C < 1 || C >= K) {
        throw std::invalid_argument("code dimension must satisfy 1 <= C < K (undercomplete)");
    }
}

// Walks a layer list tracking (channels, length) and yields one entry per
// parametric layer.
std::vector<ConvPlanEntry> plan_stack(const NetworkSpec& spec, const std::vector<LayerSpec>& layers,
                                      int in_channels, int in_length, bool is_decoder) {
    std::vector<ConvPlanEntry> plan;
    int ch = in_channels;
    int len = in_length;
    int conv_seen = 0;
    for (int i = 0; i < static_cast<int>(layers.size()); ++i) {
        const LayerSpec& l = layers[i];
        if (l.kind == LayerKind::Reshape) {
            ch = ch * len;
            len = 1;
            if (is_decoder) {
                // Decoder trunk ends (K,1); the reshape reads it as (1,K).
                len = ch;
                ch = 1;
            }
            continue;
        }
        int in_ch = ch;
        if (is_decoder && spec.denoising) {
            if (conv_seen == 1) in_ch = spec.C + spec.N;  // concat(code, noise feature)
            if (conv_seen == 2) in_ch = spec.C;           // denoised code
        }
        plan.push_back({i, in_ch, l.out_channels, l.kernel_size, len, l.kind, l.batch_norm});
        ch = l.out_channels;
        ++conv_seen;
    }
    return plan;
}

std::vector<ConvPlanEntry> plan_encoder(const NetworkSpec& spec) {
    return plan_stack(spec, spec.encoder_layers, 1, spec.K, false);
}

std::vector<ConvPlanEntry> plan_decoder(const NetworkSpec& spec) {
    return plan_stack(spec, spec.decoder_layers, spec.C, 1, true);
}

}  // namespace

GradStore::GradStore(const ParameterStore& params) {
    layers.reserve(params.layers.size());
    for (const auto& lp : params.layers) {
        layers.push_back({std::vector<double>(lp.kernel.weights.size(), 0.0),
                          std::vector<double>(lp.kernel.bias.size(), 0.0)});
    }
}

void GradStore::zero() {
    for (auto& e : layers) {
        std::fill(e.weight_grad.begin(), e.weight_grad.end(), 0.0);
        std::fill(e.bias_grad.begin(), e.bias_grad.end(), 0.0);
    }
}

std::vector<LayerSpec> build_encoder(int K, int N, int C) {
    validate_dims(K, N, C);
    std::vector<LayerSpec> layers;
    for (int i = 0; i < 3; ++i) layers.push_back({LayerKind::ConvReLU, 3, N, false});
    layers.push_back({LayerKind::Reshape, 0, 0, false});
    layers.push_back({LayerKind::Conv, 1, C, false});
    return layers;
}

std::vector<LayerSpec> build_decoder(int K, int N, int C, bool denoising) {
    validate_dims(K, N, C);
    std::vector<LayerSpec> layers;
    if (denoising) {
        layers.push_back({LayerKind::ConvReLU, 3, N, false});  // noise feature
        layers.push_back({LayerKind::Conv, 1, C, false});      // noise estimate
        for (int i = 0; i < 8; ++i) layers.push_back({LayerKind::ConvReLU, 3, N, false});
    } else {
        for (int i = 0; i < 10; ++i) layers.push_back({LayerKind::ConvReLU, 3, N, false});
    }
    layers.push_back({LayerKind::ConvSigmoid, 3, K, false});
    layers.push_back({LayerKind::Reshape, 0, 0, false});
    return layers;
}

NetworkSpec build_pscdn(int K, int N, int C) {
    NetworkSpec spec;
    spec.K = K;
    spec.C = C;
    spec.N = N;
    spec.denoising = true;
    spec.encoder_layers = build_encoder(K, N, C);
    spec.decoder_layers = build_decoder(K, N, C, true);
    return spec;
}

NetworkSpec build_pscn_variant(char variant, int K, int N, int C) {
    if (variant < 'a' || variant > 'f') {
        throw std::invalid_argument("unknown PSCN variant, expected 'a'..'f'");
    }
    NetworkSpec spec;
    spec.K = K;
    spec.C = C;
    spec.N = N;
    spec.denoising = false;
    spec.bn_variant = variant;
    spec.encoder_layers = build_encoder(K, N, C);
    spec.decoder_layers = build_decoder(K, N, C, false);
    if (variant >= 'b' && variant <= 'e') {
        int remaining = variant - 'a';  // first 1..4 encoder conv layers gain BN
        for (auto& l : spec.encoder_layers) {
            if (l.kind == LayerKind::Reshape) continue;
            if (remaining == 0) break;
            l.batch_norm = true;
            --remaining;
        }
    } else if (variant == 'f') {
        for (auto& l : spec.encoder_layers) {
            if (l.kind != LayerKind::Reshape) l.batch_norm = true;
        }
        for (auto& l : spec.decoder_layers) {
            if (l.kind != LayerKind::Reshape) l.batch_norm = true;
        }
    }
    return spec;
}

NetworkSpec build_model(const std::string& name, int K, int N, int C) {
    if (name == "pscdn") return build_pscdn(K, N, C);
    if (name.size() == 6 && name.rfind("pscn-", 0) == 0) {
        return build_pscn_variant(name[5], K, N, C);
    }
    throw std::invalid_argument("unknown model name: " + name);
}

long count_parameters(const NetworkSpec& spec) {
    long total = 0;
    for (const auto& p : plan_encoder(spec)) {
        total += static_cast<long>(p.out_channels) * p.in_channels * p.kernel_size + p.out_channels;
    }
    for (const auto& p : plan_decoder(spec)) {
        total += static_cast<long>(p.out_channels) * p.in_channels * p.kernel_size + p.out_channels;
    }
    return total;
}

int conv_layer_count(const std::vector<LayerSpec>& layers) {
    int n = 0;
    for (const auto& l : layers) {
        if (l.kind != LayerKind::Reshape) ++n;
    }
    return n;
}

int batch_norm_layer_count(const NetworkSpec& spec) {
    int n = 0;
    for (const auto& l : spec.encoder_layers) n += l.batch_norm ? 1 : 0;
    for (const auto& l : spec.decoder_layers) n += l.batch_norm ? 1 : 0;
    return n;
}

namespace {

ParameterStore make_params(const NetworkSpec& spec) {
    ParameterStore store;
    auto add = [&store](const std::string& prefix, const std::vector<ConvPlanEntry>& plan) {
        int idx = 0;
        for (const auto& p : plan) {
            ++idx;
            LayerParams lp;
            lp.id = prefix + std::to_string(idx);
            lp.kernel = ConvKernel(p.out_channels, p.in_channels, p.kernel_size);
            lp.has_batch_norm = p.batch_norm;
            if (p.batch_norm) {
                lp.bn_running_mean.assign(p.out_channels, 0.0);
                lp.bn_running_var.assign(p.out_channels, 1.0);
            }
            store.layers.push_back(std::move(lp));
        }
    };
    add("enc", plan_encoder(spec));
    add("dec", plan_decoder(spec));
    return store;
}

}  // namespace

ParameterStore init_parameters(const NetworkSpec& spec, std::uint64_t seed) {
    ParameterStore store = make_params(spec);
    std::mt19937_64 rng(seed);
    std::vector<ConvPlanEntry> plan = plan_encoder(spec);
    {
        auto dec = plan_decoder(spec);
        plan.insert(plan.end(), dec.begin(), dec.end());
    }
    for (std::size_t l = 0; l < store.layers.size(); ++l) {
        auto& lp = store.layers[l];
        const ConvPlanEntry& pe = plan[l];
        // At spatial length 1 a kernel-3 conv only ever fires its center tap,
        // so the effective fan is the channel count alone; scaling by the
        // nominal fan would shrink activations ~3x per layer through the
        // deep length-1 decoder trunk.
        const int eff_taps = pe.in_length == 1 ? 1 : pe.kernel_size;
        const double fan_in = static_cast<double>(pe.in_channels) * eff_taps;
        const double fan_out = static_cast<double>(pe.out_channels) * eff_taps;
        // He-style scaling for ReLU layers (compensates the halving of
        // variance by the rectifier); Glorot for linear/sigmoid layers.
        const double limit = pe.kind == LayerKind::ConvReLU
                                 ? std::sqrt(6.0 / fan_in)
                                 : std::sqrt(6.0 / (fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (auto& w : lp.kernel.weights) w = dist(rng);
        // a small positive bias keeps ReLU units alive through the deep
        // length-1 decoder trunk, which otherwise contracts toward zero
        for (auto& b : lp.kernel.bias) b = 0.01;
    }
    return store;
}

Model::Model(NetworkSpec spec, ParameterStore params) : spec_(std::move(spec)), params_(std::move(params)) {
    validate_dims(spec_.K, spec_.N, spec_.C);
    ParameterStore expected = make_params(spec_);
    if (expected.layers.size() != params_.layers.size()) {
        throw std::invalid_argument("ParameterStore layer count does not match spec");
    }
    for (std::size_t i = 0; i < expected.layers.size(); ++i) {
        const auto& e = expected.layers[i].kernel;
        const auto& g = params_.layers[i].kernel;
        if (e.out_channels != g.out_channels || e.in_channels != g.in_channels ||
            e.kernel_size != g.kernel_size) {
            throw std::invalid_argument("ParameterStore shape mismatch at layer " + expected.layers[i].id);
        }
        params_.layers[i].has_batch_norm = expected.layers[i].has_batch_norm;
        if (expected.layers[i].has_batch_norm && params_.layers[i].bn_running_mean.empty()) {
            params_.layers[i].bn_running_mean.assign(e.out_channels, 0.0);
            params_.layers[i].bn_running_var.assign(e.out_channels, 1.0);
        }
    }
    encoder_param_offset_ = 0;
    decoder_param_offset_ = conv_layer_count(spec_.encoder_layers);
}

namespace {

std::vector<Tensor> apply_activation(LayerKind kind, const std::vector<Tensor>& pre) {
    std::vector<Tensor> out;
    out.reserve(pre.size());
    for (const auto& t : pre) {
        switch (kind) {
            case LayerKind::ConvReLU: out.push_back(relu(t)); break;
            case LayerKind::ConvSigmoid: out.push_back(sigmoid(t)); break;
            default: out.push_back(t); break;
        }
    }
    return out;
}

}  // namespace

// Applies conv [+ BN] [+ activation] to a whole batch.
static std::vector<Tensor> conv_layer_forward(LayerParams& lp, LayerKind kind, Mode mode, double eps,
                                              double momentum, const std::vector<Tensor>& batch,
                                              detail::LayerCache* cache) {
    std::vector<Tensor> conv_out;
    conv_out.reserve(batch.size());
    for (const auto& x : batch) conv_out.push_back(conv1d(x, lp.kernel));

    std::vector<Tensor> pre_act;
    BatchNormCache bn_cache;
    if (lp.has_batch_norm) {
        if (mode == Mode::Train) {
            pre_act = batch_norm(conv_out, eps, &bn_cache);
            for (int c = 0; c < lp.kernel.out_channels; ++c) {
                lp.bn_running_mean[c] = momentum * lp.bn_running_mean[c] + (1.0 - momentum) * bn_cache.mean[c];
                lp.bn_running_var[c] = momentum * lp.bn_running_var[c] + (1.0 - momentum) * bn_cache.var[c];
            }
        } else {
            pre_act.reserve(conv_out.size());
            for (const auto& t : conv_out) {
                pre_act.push_back(batch_norm_eval(t, lp.bn_running_mean, lp.bn_running_var, eps));
            }
        }
    } else {
        pre_act = conv_out;
    }

    std::vector<Tensor> act_out = apply_activation(kind, pre_act);

    if (cache != nullptr) {
        cache->input = batch;
        cache->conv_out = std::move(conv_out);
        cache->bn = std::move(bn_cache);
        if (lp.has_batch_norm) cache->bn_out = pre_act;
        cache->act_out = act_out;
    }
    return act_out;
}

// Backward through conv [+ BN] [+ activation]; returns input gradients.
static std::vector<Tensor> conv_layer_backward(const LayerParams& lp, LayerKind kind, double /*eps*/,
                                               const detail::LayerCache& cache,
                                               const std::vector<Tensor>& upstream,
                                               GradStore::Entry& grads) {
    std::vector<Tensor> up = upstream;
    if (kind == LayerKind::ConvSigmoid) {
        for (std::size_t b = 0; b < up.size(); ++b) {
            up[b] = sigmoid_backward(cache.act_out[b], up[b]);
        }
    } else if (kind == LayerKind::ConvReLU) {
        const std::vector<Tensor>& pre = lp.has_batch_norm ? cache.bn_out : cache.conv_out;
        for (std::size_t b = 0; b < up.size(); ++b) {
            up[b] = relu_backward(pre[b], up[b]);
        }
    }
    if (lp.has_batch_norm) {
        up = batch_norm_backward(cache.conv_out, cache.bn, up);
    }
    std::vector<Tensor> input_grads;
    input_grads.reserve(up.size());
    for (std::size_t b = 0; b < up.size(); ++b) {
        input_grads.emplace_back(cache.input[b].channels, cache.input[b].length);
        conv1d_backward_acc(cache.input[b], lp.kernel, up[b], grads.weight_grad.data(),
                            grads.bias_grad.data(), input_grads.back());
    }
    return input_grads;
}

std::vector<Tensor> Model::encode(const std::vector<Tensor>& inputs, Mode mode, EncoderCache* cache) {
    for (const auto& x : inputs) {
        if (x.channels != 1 || x.length != spec_.K) {
            throw std::invalid_argument("encode: input must have shape (1, K)");
        }
    }
    if (cache != nullptr) cache->layers.assign(conv_layer_count(spec_.encoder_layers), {});
    std::vector<Tensor> batch = inputs;
    int param_idx = encoder_param_offset_;
    int conv_idx = 0;
    for (const auto& l : spec_.encoder_layers) {
        if (l.kind == LayerKind::Reshape) {
            for (auto& t : batch) t = reshape(t, t.channels * t.length, 1);
            continue;
        }
        detail::LayerCache* lc = cache != nullptr ? &cache->layers[conv_idx] : nullptr;
        batch = conv_layer_forward(params_.layers[param_idx], l.kind, mode, bn_eps_, bn_momentum_, batch, lc);
        ++param_idx;
        ++conv_idx;
    }
    return batch;
}

std::vector<Tensor> Model::encode_backward(const EncoderCache& cache, const std::vector<Tensor>& upstream,
                                           GradStore& grads) {
    std::vector<Tensor> up = upstream;
    int param_idx = encoder_param_offset_ + conv_layer_count(spec_.encoder_layers) - 1;
    int conv_idx = conv_layer_count(spec_.encoder_layers) - 1;
    for (auto it = spec_.encoder_layers.rbegin(); it != spec_.encoder_layers.rend(); ++it) {
        if (it->kind == LayerKind::Reshape) {
            for (auto& t : up) t = reshape(t, spec_.N, spec_.K);
            continue;
        }
        up = conv_layer_backward(params_.layers[param_idx], it->kind, bn_eps_, cache.layers[conv_idx], up,
                                 grads.layers[param_idx]);
        --param_idx;
        --conv_idx;
    }
    return up;
}

std::vector<Tensor> Model::decode(const std::vector<Tensor>& noisy_codes, Mode mode, DecoderCache* cache) {
    for (const auto& c : noisy_codes) {
        if (c.channels != spec_.C || c.length != 1) {
            throw std::invalid_argument("decode: code must have shape (C, 1)");
        }
    }
    if (cache != nullptr) cache->layers.assign(conv_layer_count(spec_.decoder_layers), {});
    std::vector<Tensor> batch;
    int param_idx = decoder_param_offset_;
    int conv_idx = 0;
    auto layer = [&](const std::vector<Tensor>& in, LayerKind kind) {
        detail::LayerCache* lc = cache != nullptr ? &cache->layers[conv_idx] : nullptr;
        auto out = conv_layer_forward(params_.layers[param_idx], kind, mode, bn_eps_, bn_momentum_, in, lc);
        ++param_idx;
        ++conv_idx;
        return out;
    };

    std::size_t trunk_start = 0;
    if (spec_.denoising) {
        std::vector<Tensor> feature = layer(noisy_codes, spec_.decoder_layers[0].kind);
        std::vector<Tensor> cc;
        cc.reserve(noisy_codes.size());
        for (std::size_t b = 0; b < noisy_codes.size(); ++b) {
            cc.push_back(concat_channels(noisy_codes[b], feature[b]));
        }
        std::vector<Tensor> estimate = layer(cc, spec_.decoder_layers[1].kind);
        batch.reserve(noisy_codes.size());
        for (std::size_t b = 0; b < noisy_codes.size(); ++b) {
            batch.push_back(residual_sub(noisy_codes[b], estimate[b]));
        }
        if (cache != nullptr) {
            cache->noisy_code = noisy_codes;
            cache->concat_in = std::move(cc);
            cache->noise_estimate = std::move(estimate);
            cache->denoised = batch;
        }
        trunk_start = 2;
    } else {
        batch = noisy_codes;
    }

    for (std::size_t i = trunk_start; i < spec_.decoder_layers.size(); ++i) {
        const LayerSpec& l = spec_.decoder_layers[i];
        if (l.kind == LayerKind::Reshape) {
            for (auto& t : batch) t = reshape(t, 1, t.channels);
            continue;
        }
        batch = layer(batch, l.kind);
    }
    return batch;
}

std::vector<Tensor> Model::decode_backward(const DecoderCache& cache, const std::vector<Tensor>& upstream,
                                           GradStore& grads) {
    std::vector<Tensor> up = upstream;
    // Final reshape (1,K) back to (K,1).
    for (auto& t : up) t = reshape(t, t.length, 1);

    const int n_conv = conv_layer_count(spec_.decoder_layers);
    int param_idx = decoder_param_offset_ + n_conv - 1;
    int conv_idx = n_conv - 1;
    const int trunk_first = spec_.denoising ? 2 : 0;
    for (; conv_idx >= trunk_first; --conv_idx, --param_idx) {
        // Trunk layers are a plain chain; locate the spec entry for the kind.
        LayerKind kind = LayerKind::Conv;
        int seen = 0;
        for (const auto& l : spec_.decoder_layers) {
            if (l.kind == LayerKind::Reshape) continue;
            if (seen == conv_idx) {
                kind = l.kind;
                break;
            }
            ++seen;
        }
        up = conv_layer_backward(params_.layers[param_idx], kind, bn_eps_, cache.layers[conv_idx], up,
                                 grads.layers[param_idx]);
    }
    if (!spec_.denoising) return up;

    // up now holds d(denoised code); denoised = noisy - estimate.
    std::vector<Tensor> d_code = up;
    std::vector<Tensor> d_estimate;
    d_estimate.reserve(up.size());
    for (const auto& t : up) {
        Tensor neg(t.channels, t.length);
        for (std::size_t i = 0; i < t.data.size(); ++i) neg.data[i] = -t.data[i];
        d_estimate.push_back(std::move(neg));
    }
    // conv_idx == 1 is the kernel-1 noise-estimate conv on concat(code, feature).
    std::vector<Tensor> d_concat = conv_layer_backward(params_.layers[decoder_param_offset_ + 1],
                                                       spec_.decoder_layers[1].kind, bn_eps_,
                                                       cache.layers[1], d_estimate,
                                                       grads.layers[decoder_param_offset_ + 1]);
    std::vector<Tensor> d_feature;
    d_feature.reserve(d_concat.size());
    for (std::size_t b = 0; b < d_concat.size(); ++b) {
        Tensor da, db;
        concat_channels_backward(d_concat[b], spec_.C, da, db);
        for (std::size_t i = 0; i < da.data.size(); ++i) d_code[b].data[i] += da.data[i];
        d_feature.push_back(std::move(db));
    }
    std::vector<Tensor> d_code_from_feature =
        conv_layer_backward(params_.layers[decoder_param_offset_], spec_.decoder_layers[0].kind, bn_eps_,
                            cache.layers[0], d_feature, grads.layers[decoder_param_offset_]);
    for (std::size_t b = 0; b < d_code.size(); ++b) {
        for (std::size_t i = 0; i < d_code[b].data.size(); ++i) {
            d_code[b].data[i] += d_code_from_feature[b].data[i];
        }
    }
    return d_code;
}

}  // namespace pscdn
