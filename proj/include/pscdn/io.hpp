#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pscdn/channel.hpp"
#include "pscdn/model.hpp"
#include "pscdn/train.hpp"

namespace pscdn {

// Exit codes of the experiment runner.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitDivergence = 2;
inline constexpr int kExitIo = 3;

class IoError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};
class ChecksumError : public IoError {
  public:
    using IoError::IoError;
};
class VersionError : public IoError {
  public:
    using IoError::IoError;
};
class TruncatedFileError : public IoError {
  public:
    using IoError::IoError;
};

struct ExperimentConfig {
    std::string model = "pscdn";
    int K = 9;
    int C = 2;
    int N = 56;
    std::size_t train_samples = 10000;
    std::size_t val_samples = 3000;
    std::size_t test_samples = 10000;
    std::string out_dir = "out";
    std::string preset;  // "", "table1", "fig3-pscdn", "table2-pscdn"
    TrainConfig train;
};

ExperimentConfig parse_config_file(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text);

// Binary weights container; parameters round-trip bitwise at 32-bit
// precision, verified by a trailing CRC-32 of the payload.
void save_weights(const NetworkSpec& spec, const ParameterStore& params, const std::string& path);
std::pair<NetworkSpec, ParameterStore> load_weights(const std::string& path);

// Raw packed-bit dataset container.
void save_dataset(const std::vector<PhaseSample>& samples, int K, const std::string& path);
std::vector<PhaseSample> load_dataset(const std::string& path);

void export_metrics_csv(const std::vector<MetricsRecord>& records, const std::string& path);

std::uint32_t crc32(const std::uint8_t* data, std::size_t size);

int run_experiment(const std::string& config_path);
int run_experiment_config(const ExperimentConfig& cfg);

}  // namespace pscdn
