#pragma once

#include <cstddef>
#include <optional>
#include <string>

namespace memlab {

/// Per-epoch measurements of one training run. One row of the run-log CSV.
struct CheckpointRecord {
  std::string run_id;
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  std::optional<double> train_acc_clean;  // absent when the subset is empty
  std::optional<double> train_acc_noisy;
  std::optional<double> test_acc;         // absent in blind mode
  std::optional<double> zeta_increment;   // absent when the probe is off
  std::optional<double> zeta;
};

}  // namespace memlab
