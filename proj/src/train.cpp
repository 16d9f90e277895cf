#include "pscdn/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace pscdn {

AdamState::AdamState(const ParameterStore& params) {
    layers.reserve(params.layers.size());
    for (const auto& lp : params.layers) {
        Moments m;
        m.m_w.assign(lp.kernel.weights.size(), 0.0);
        m.v_w.assign(lp.kernel.weights.size(), 0.0);
        m.m_b.assign(lp.kernel.bias.size(), 0.0);
        m.v_b.assign(lp.kernel.bias.size(), 0.0);
        layers.push_back(std::move(m));
    }
}

double mse_loss(const std::vector<Tensor>& reconstruction, const std::vector<Tensor>& truth,
                std::vector<Tensor>* grad) {
    if (reconstruction.size() != truth.size() || reconstruction.empty()) {
        throw std::invalid_argument("mse_loss: batch size mismatch");
    }
    const double m = static_cast<double>(reconstruction.size());
    double loss = 0.0;
    if (grad != nullptr) grad->clear();
    for (std::size_t b = 0; b < reconstruction.size(); ++b) {
        if (!same_shape(reconstruction[b], truth[b])) {
            throw std::invalid_argument("mse_loss: sample shape mismatch");
        }
        Tensor g(reconstruction[b].channels, reconstruction[b].length);
        for (std::size_t i = 0; i < g.data.size(); ++i) {
            const double d = reconstruction[b].data[i] - truth[b].data[i];
            loss += d * d;
            g.data[i] = 2.0 * d / m;
        }
        if (grad != nullptr) grad->push_back(std::move(g));
    }
    return loss / m;
}

double nmse(const std::vector<Tensor>& reconstruction, const std::vector<Tensor>& truth) {
    if (reconstruction.size() != truth.size() || reconstruction.empty()) {
        throw std::invalid_argument("nmse: batch size mismatch");
    }
    double num = 0.0, den = 0.0;
    for (std::size_t b = 0; b < reconstruction.size(); ++b) {
        if (!same_shape(reconstruction[b], truth[b])) {
            throw std::invalid_argument("nmse: sample shape mismatch");
        }
        for (std::size_t i = 0; i < truth[b].data.size(); ++i) {
            const double d = reconstruction[b].data[i] - truth[b].data[i];
            num += d * d;
            den += truth[b].data[i] * truth[b].data[i];
        }
    }
    if (den <= 0.0) throw std::invalid_argument("nmse: zero-norm truth");
    return num / den;
}

double nmse_to_db(double linear) { return 10.0 * std::log10(linear); }

double lr_schedule(double lr0, double decay_rate, long total_steps, int decay_steps) {
    if (decay_steps < 1) throw std::invalid_argument("lr_schedule: decay_steps must be >= 1");
    return lr0 * std::pow(decay_rate, static_cast<double>(total_steps) / decay_steps);
}

namespace {

void adam_update(std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m,
                 std::vector<double>& v, double lr, double beta1, double beta2, double eps,
                 double bc1, double bc2) {
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (!std::isfinite(g[i])) throw std::runtime_error("adam_step: non-finite gradient");
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        p[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
}

}  // namespace

void adam_step(ParameterStore& params, const GradStore& grads, AdamState& state, double lr,
               double beta1, double beta2, double eps) {
    if (params.layers.size() != grads.layers.size() || params.layers.size() != state.layers.size()) {
        throw std::invalid_argument("adam_step: store size mismatch");
    }
    ++state.t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        adam_update(params.layers[l].kernel.weights, grads.layers[l].weight_grad, state.layers[l].m_w,
                    state.layers[l].v_w, lr, beta1, beta2, eps, bc1, bc2);
        adam_update(params.layers[l].kernel.bias, grads.layers[l].bias_grad, state.layers[l].m_b,
                    state.layers[l].v_b, lr, beta1, beta2, eps, bc1, bc2);
    }
}

namespace {

std::vector<Tensor> to_tensors(const std::vector<PhaseSample>& samples, const std::vector<std::size_t>& idx,
                               std::size_t begin, std::size_t end) {
    std::vector<Tensor> out;
    out.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) out.push_back(sample_to_tensor(samples[idx[i]]));
    return out;
}

struct EvalSums {
    double err2 = 0.0;
    double truth2 = 0.0;
    double loss_sum = 0.0;
    double phase_err2 = 0.0;
    double phase_truth2 = 0.0;
    std::size_t samples = 0;
    std::size_t bit_errors = 0;
    std::size_t bits = 0;
};

void eval_batch(Model& model, const std::vector<Tensor>& inputs, const ChannelConfig& chan,
                std::mt19937_64& rng, EvalSums& sums) {
    std::vector<Tensor> codes = model.encode(inputs, Mode::Eval);
    std::vector<Tensor> noisy = awgn_channel(codes, chan, rng);
    std::vector<Tensor> out = model.decode(noisy, Mode::Eval);
    for (std::size_t b = 0; b < inputs.size(); ++b) {
        double sample_err = 0.0;
        for (std::size_t i = 0; i < out[b].data.size(); ++i) {
            const double d = out[b].data[i] - inputs[b].data[i];
            sample_err += d * d;
            sums.truth2 += inputs[b].data[i] * inputs[b].data[i];
            const bool bit = out[b].data[i] >= 0.5;
            const bool ref = inputs[b].data[i] >= 0.5;
            sums.bit_errors += bit != ref ? 1 : 0;
            ++sums.bits;
        }
        sums.err2 += sample_err;
        sums.loss_sum += sample_err;
        // phase-domain error after hard decision, wrapped to (-pi, pi]
        const double truth_phase = phase_from_bits(hard_decision(inputs[b]));
        const double rec_phase = phase_from_bits(hard_decision(out[b]));
        const double d = std::remainder(rec_phase - truth_phase, 2.0 * std::numbers::pi);
        sums.phase_err2 += d * d;
        sums.phase_truth2 += truth_phase * truth_phase;
        ++sums.samples;
    }
}

MetricsRecord finish_eval(const EvalSums& sums, int epoch, double lr, double seconds) {
    MetricsRecord r;
    r.epoch = epoch;
    r.train_loss = sums.samples > 0 ? sums.loss_sum / sums.samples : 0.0;
    r.val_nmse_linear = sums.err2 / sums.truth2;
    r.val_nmse_db = nmse_to_db(r.val_nmse_linear);
    r.bit_error_rate = sums.bits > 0 ? static_cast<double>(sums.bit_errors) / sums.bits : 0.0;
    r.phase_nmse = sums.phase_truth2 > 0.0 ? sums.phase_err2 / sums.phase_truth2 : 0.0;
    r.lr = lr;
    r.wall_time_seconds = seconds;
    return r;
}

}  // namespace

std::vector<MetricsRecord> train(Model& model, const std::vector<PhaseSample>& train_set,
                                 const std::vector<PhaseSample>& val_set, const TrainConfig& cfg) {
    if (train_set.empty() || val_set.empty()) throw std::invalid_argument("train: empty dataset");
    if (cfg.epochs < 1 || cfg.batch_size < 1) throw std::invalid_argument("train: bad config");
    if (cfg.decay_rate <= 0.0 || cfg.decay_rate > 1.0) throw std::invalid_argument("train: bad decay_rate");
    const bool has_bn = batch_norm_layer_count(model.spec()) > 0;
    if (has_bn && cfg.batch_size < 2) {
        throw std::invalid_argument("train: batch_size must be >= 2 with batch-norm layers");
    }

    std::mt19937_64 shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
    std::mt19937_64 chan_rng(cfg.seed ^ 0xc2b2ae3d27d4eb4full);
    ChannelConfig chan{cfg.channel_g, cfg.train_snr_db, cfg.channel_noiseless};

    GradStore grads(model.params());
    AdamState adam(model.params());
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    std::vector<MetricsRecord> records;
    ParameterStore last_good = model.params();
    const auto t0 = std::chrono::steady_clock::now();

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double epoch_loss = 0.0;
        int batches = 0;
        double lr = cfg.lr0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            if (end - start < 2) break;  // too small for batch statistics
            std::vector<Tensor> inputs = to_tensors(train_set, order, start, end);

            EncoderCache enc_cache;
            DecoderCache dec_cache;
            std::vector<Tensor> codes = model.encode(inputs, Mode::Train, &enc_cache);
            std::vector<Tensor> noisy = awgn_channel(codes, chan, chan_rng);
            std::vector<Tensor> out = model.decode(noisy, Mode::Train, &dec_cache);

            std::vector<Tensor> dout;
            const double loss = mse_loss(out, inputs, &dout);
            if (!std::isfinite(loss)) {
                model.params() = last_good;
                throw DivergenceError("training diverged (non-finite loss) at epoch " +
                                          std::to_string(epoch),
                                      records);
            }
            grads.zero();
            std::vector<Tensor> d_noisy = model.decode_backward(dec_cache, dout, grads);
            for (auto& t : d_noisy) {
                for (auto& v : t.data) v *= cfg.channel_g;
            }
            model.encode_backward(enc_cache, d_noisy, grads);

            lr = lr_schedule(cfg.lr0, cfg.decay_rate, adam.t, cfg.decay_steps);
            adam_step(model.params(), grads, adam, lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
            epoch_loss += loss;
            ++batches;
        }

        // validation through the channel at the training SNR
        std::mt19937_64 val_rng(cfg.seed ^ (0xd6e8feb86659fd93ull + epoch));
        EvalSums sums;
        std::vector<std::size_t> val_idx(val_set.size());
        std::iota(val_idx.begin(), val_idx.end(), 0);
        for (std::size_t start = 0; start < val_set.size(); start += 1000) {
            const std::size_t end = std::min(val_set.size(), start + 1000);
            eval_batch(model, to_tensors(val_set, val_idx, start, end), chan, val_rng, sums);
        }
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        MetricsRecord rec = finish_eval(sums, epoch, lr, seconds);
        rec.train_loss = batches > 0 ? epoch_loss / batches : 0.0;
        records.push_back(rec);
        last_good = model.params();
    }
    return records;
}

MetricsRecord evaluate(Model& model, const std::vector<PhaseSample>& dataset, double snr_db,
                       std::uint64_t trials_seed, double channel_g, bool noiseless) {
    if (dataset.empty()) throw std::invalid_argument("evaluate: empty dataset");
    std::mt19937_64 rng(trials_seed);
    ChannelConfig chan{channel_g, snr_db, noiseless};
    EvalSums sums;
    std::vector<std::size_t> idx(dataset.size());
    std::iota(idx.begin(), idx.end(), 0);
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t start = 0; start < dataset.size(); start += 1000) {
        const std::size_t end = std::min(dataset.size(), start + 1000);
        eval_batch(model, to_tensors(dataset, idx, start, end), chan, rng, sums);
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return finish_eval(sums, 0, 0.0, seconds);
}

double time_inference(Model& model, const std::vector<PhaseSample>& dataset, int repetitions) {
    if (repetitions < 3) throw std::invalid_argument("time_inference: need at least 3 repetitions");
    std::vector<Tensor> inputs;
    inputs.reserve(dataset.size());
    for (const auto& s : dataset) inputs.push_back(sample_to_tensor(s));
    std::vector<double> times;
    times.reserve(repetitions);
    volatile double sink = 0.0;
    for (int r = 0; r < repetitions; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        std::vector<Tensor> codes = model.encode(inputs, Mode::Eval);
        std::vector<Tensor> out = model.decode(codes, Mode::Eval);
        sink = sink + out.front().data.front();
        times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    std::nth_element(times.begin(), times.begin() + times.size() / 2, times.end());
    return times[times.size() / 2];
}

}  // namespace pscdn
