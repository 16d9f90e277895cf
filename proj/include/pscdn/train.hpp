#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "pscdn/channel.hpp"
#include "pscdn/model.hpp"
#include "pscdn/tensor.hpp"

namespace pscdn {

struct TrainConfig {
    int epochs = 100;
    int batch_size = 200;
    double lr0 = 1e-3;
    double decay_rate = 0.99;
    int decay_steps = 1000;
    double train_snr_db = 10.0;
    double channel_g = 1.0;
    bool channel_noiseless = false;
    std::uint64_t seed = 1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
};

struct AdamState {
    struct Moments {
        std::vector<double> m_w, v_w, m_b, v_b;
    };
    std::vector<Moments> layers;
    long t = 0;

    explicit AdamState(const ParameterStore& params);
};

struct MetricsRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_nmse_linear = 0.0;
    double val_nmse_db = 0.0;
    double bit_error_rate = 0.0;
    // NMSE between the true quantized phase and the phase recovered via hard
    // decision, using wrapped angular differences
    double phase_nmse = 0.0;
    double lr = 0.0;
    double wall_time_seconds = 0.0;
};

class DivergenceError : public std::runtime_error {
  public:
    DivergenceError(const std::string& what, std::vector<MetricsRecord> records)
        : std::runtime_error(what), records_(std::move(records)) {}
    const std::vector<MetricsRecord>& records() const { return records_; }

  private:
    std::vector<MetricsRecord> records_;
};

// Mean over batch columns of squared Euclidean distance; optionally emits
// the loss gradient with respect to the reconstruction.
double mse_loss(const std::vector<Tensor>& reconstruction, const std::vector<Tensor>& truth,
                std::vector<Tensor>* grad = nullptr);

// Ratio of squared Frobenius norms over the whole batch.
double nmse(const std::vector<Tensor>& reconstruction, const std::vector<Tensor>& truth);
double nmse_to_db(double linear);

double lr_schedule(double lr0, double decay_rate, long total_steps, int decay_steps);

void adam_step(ParameterStore& params, const GradStore& grads, AdamState& state, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

// Channel-in-the-loop training: encoder -> AWGN feedback channel -> decoder,
// MSE loss, Adam with exponentially decayed learning rate. On divergence the
// model is restored to the last completed epoch and DivergenceError is thrown.
std::vector<MetricsRecord> train(Model& model, const std::vector<PhaseSample>& train_set,
                                 const std::vector<PhaseSample>& val_set, const TrainConfig& cfg);

MetricsRecord evaluate(Model& model, const std::vector<PhaseSample>& dataset, double snr_db,
                       std::uint64_t trials_seed, double channel_g = 1.0, bool noiseless = false);

// Median wall time of full-dataset forward passes, in seconds.
double time_inference(Model& model, const std::vector<PhaseSample>& dataset, int repetitions);

}  // namespace pscdn
