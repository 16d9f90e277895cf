#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "pscdn/channel.hpp"
#include "pscdn/io.hpp"
#include "pscdn/model.hpp"
#include "pscdn/train.hpp"

namespace {

pscdn::ExperimentConfig load_cfg(const std::string& config_path) {
    if (config_path.empty()) return pscdn::ExperimentConfig{};
    return pscdn::parse_config_file(config_path);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Phase-shift feedback compression experiments"};
    app.require_subcommand(1);

    std::string config_path, out_path = "out", weights_path, data_path, model_name = "pscdn";
    std::uint64_t seed = 1;
    double snr_db = 10.0;
    std::string cr = "2/9";
    std::size_t count = 10000;
    int K = 9, N = 56, reps = 5;

    auto parse_cr = [&cr, &K](int& C) {
        const auto slash = cr.find('/');
        if (slash == std::string::npos) throw CLI::ValidationError("--cr expects the form C/K");
        C = std::stoi(cr.substr(0, slash));
        K = std::stoi(cr.substr(slash + 1));
    };

    auto* gen = app.add_subcommand("generate-data", "Generate a uniform quantized-phase dataset");
    gen->add_option("--out", out_path, "Output dataset file")->required();
    gen->add_option("--count", count, "Number of samples");
    gen->add_option("--bits", K, "Quantization bits per phase");
    gen->add_option("--seed", seed, "RNG seed");

    auto* train_cmd = app.add_subcommand("train", "Train a model from a config file");
    train_cmd->add_option("--config", config_path, "key=value config file")->required();

    auto* eval_cmd = app.add_subcommand("eval", "Evaluate saved weights through the feedback channel");
    eval_cmd->add_option("--weights", weights_path, "Weights file")->required();
    eval_cmd->add_option("--data", data_path, "Dataset file (generated if omitted)");
    eval_cmd->add_option("--count", count, "Samples to generate when --data is omitted");
    eval_cmd->add_option("--snr-db", snr_db, "Channel SNR in dB");
    eval_cmd->add_option("--seed", seed, "RNG seed");

    auto* abl = app.add_subcommand("ablation", "Train PSCN variants a-f at CR 2/9 and 3/9");
    abl->add_option("--config", config_path, "key=value config file");
    abl->add_option("--out", out_path, "Output directory");

    auto* sweep = app.add_subcommand("sweep", "PSCDN CR x SNR sweep");
    sweep->add_option("--config", config_path, "key=value config file");
    sweep->add_option("--out", out_path, "Output directory");

    auto* cp = app.add_subcommand("count-params", "Print the model's parameter count");
    cp->add_option("--model", model_name, "pscdn or pscn-a..pscn-f");
    cp->add_option("--cr", cr, "Compression ratio C/K");
    cp->add_option("--filters", N, "Filter count N");

    auto* tm = app.add_subcommand("time", "Median inference time over the test set");
    tm->add_option("--weights", weights_path, "Weights file")->required();
    tm->add_option("--count", count, "Test-set size");
    tm->add_option("--seed", seed, "RNG seed");
    tm->add_option("--reps", reps, "Repetitions (median reported)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : pscdn::kExitUsage;
    }

    try {
        if (gen->parsed()) {
            auto samples = pscdn::generate_dataset(count, K, seed);
            pscdn::save_dataset(samples, K, out_path);
            std::cout << "wrote " << samples.size() << " samples to " << out_path << "\n";
            return pscdn::kExitOk;
        }
        if (train_cmd->parsed()) {
            return pscdn::run_experiment(config_path);
        }
        if (eval_cmd->parsed()) {
            auto [spec, params] = pscdn::load_weights(weights_path);
            pscdn::Model model(spec, std::move(params));
            std::vector<pscdn::PhaseSample> data = data_path.empty()
                                                       ? pscdn::generate_dataset(count, spec.K, seed)
                                                       : pscdn::load_dataset(data_path);
            auto rec = pscdn::evaluate(model, data, snr_db, seed + 77);
            std::cout << "NMSE " << rec.val_nmse_linear << " (" << rec.val_nmse_db << " dB), BER "
                      << rec.bit_error_rate << "\n";
            return pscdn::kExitOk;
        }
        if (abl->parsed() || sweep->parsed()) {
            pscdn::ExperimentConfig cfg = load_cfg(config_path);
            cfg.preset = abl->parsed() ? "table1" : "fig3-pscdn";
            if (out_path != "out" || cfg.out_dir.empty()) cfg.out_dir = out_path;
            return pscdn::run_experiment_config(cfg);
        }
        if (cp->parsed()) {
            int C = 2;
            parse_cr(C);
            auto spec = pscdn::build_model(model_name, K, N, C);
            std::cout << pscdn::count_parameters(spec) << "\n";
            return pscdn::kExitOk;
        }
        if (tm->parsed()) {
            auto [spec, params] = pscdn::load_weights(weights_path);
            pscdn::Model model(spec, std::move(params));
            auto data = pscdn::generate_dataset(count, spec.K, seed);
            std::cout << pscdn::time_inference(model, data, reps) << " s\n";
            return pscdn::kExitOk;
        }
    } catch (const pscdn::DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return pscdn::kExitDivergence;
    } catch (const pscdn::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return pscdn::kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return pscdn::kExitUsage;
    }
    return pscdn::kExitUsage;
}
