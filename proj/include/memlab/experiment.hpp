#pragma once

#include "memlab/data.hpp"
#include "memlab/errors.hpp"
#include "memlab/nn.hpp"
#include "memlab/records.hpp"
#include "memlab/susceptibility.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace memlab {

// ---------------------------------------------------------------------------
// Run configuration. One JSON document per run; unknown keys are rejected.
// ---------------------------------------------------------------------------

struct DatasetConfig {
  std::string kind = "synthetic_blobs";  // synthetic_blobs | synthetic_sphere | idx
  std::size_t n = 1000;
  std::size_t d = 16;
  int classes = 10;
  double spread = 1.0;
  std::size_t test_n = 0;  // held-out clean samples from the same distribution
  std::filesystem::path train_images, train_labels, test_images, test_labels;
  std::size_t limit = 0;
};

struct NoiseConfig {
  NoiseKind kind = NoiseKind::symmetric;
  double level = 0.0;
  std::optional<std::uint64_t> seed;  // default: derived from the run seed
};

struct ModelConfig {
  std::string kind = "mlp";  // mlp | two_layer_relu
  std::size_t m = 1024;
  double kappa = 1.0;
  std::vector<std::size_t> hidden_sizes{64, 64};
};

struct ProbeConfig {
  bool enabled = true;
  std::size_t batch_size = kDefaultProbeSize;
  ProbeEtaSource eta_mode = ProbeEtaSource::same_as_training;
  double eta = 0.0;  // used when eta_mode is fixed
  std::optional<std::uint64_t> seed;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string run_id;  // default: "run-<seed>"
  DatasetConfig dataset;
  NoiseConfig noise;
  ModelConfig model;
  OptimizerConfig optimizer;
  ProbeConfig probe;
  std::filesystem::path run_log_path;

  std::string effective_run_id() const;
  /// Throws InvalidArgument naming the offending field.
  void validate() const;
};

/// Parses and validates a config document. Throws InvalidArgument with the
/// field path on unknown keys, wrong types or out-of-range values.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Applies a flat override such as "optimizer.eta=0.05" or "seed=3".
void apply_override(RunConfig& config, const std::string& assignment);

std::string to_json(const RunConfig& config);

// ---------------------------------------------------------------------------
// Run execution.
// ---------------------------------------------------------------------------

/// Training split (noise injected) and clean test split of a config.
struct RunData {
  LabeledDataset train;
  std::optional<LabeledDataset> test;
};

RunData build_run_data(const RunConfig& config);

/// Trains per the config and returns one record per epoch. Throws
/// NumericError if the training loss becomes non-finite.
std::vector<CheckpointRecord> execute_run(const RunConfig& config);

// ---------------------------------------------------------------------------
// Run-log CSV.
// ---------------------------------------------------------------------------

inline constexpr const char* kRunLogHeader =
    "run_id,epoch,lr,train_loss,train_acc,train_acc_clean,train_acc_noisy,test_acc,"
    "zeta_increment,zeta";

/// 17 significant digits; absent values are empty fields.
std::string format_real(double v);

void write_run_log(std::ostream& out, const std::vector<CheckpointRecord>& records);
void write_run_log(const std::filesystem::path& path, const std::vector<CheckpointRecord>& records);

/// Throws FormatError naming the file and line on malformed input.
std::vector<CheckpointRecord> read_run_log(std::istream& in, const std::string& source = "<stream>");
std::vector<CheckpointRecord> read_run_log(const std::filesystem::path& path);

}  // namespace memlab
