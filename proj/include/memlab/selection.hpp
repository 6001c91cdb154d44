#pragma once

#include "memlab/errors.hpp"
#include "memlab/records.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace memlab {

// ---------------------------------------------------------------------------
// Correlation.
// ---------------------------------------------------------------------------

/// Sample Pearson correlation. Throws UndefinedMetric when either input has
/// zero variance.
template <typename A, typename B>
double pearson(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& y) {
  if (x.size() != y.size()) {
    throw ShapeError("pearson: lengths " + std::to_string(x.size()) + " and " +
                     std::to_string(y.size()) + " differ");
  }
  if (x.size() < 2) throw InvalidArgument("pearson: need at least 2 points");
  const Eigen::VectorXd xv = x.derived().template cast<double>().reshaped();
  const Eigen::VectorXd yv = y.derived().template cast<double>().reshaped();
  const Eigen::ArrayXd xc = xv.array() - xv.mean();
  const Eigen::ArrayXd yc = yv.array() - yv.mean();
  const double sxx = xc.square().sum();
  const double syy = yc.square().sum();
  if (sxx == 0.0 || syy == 0.0) throw UndefinedMetric("pearson: zero variance");
  return std::clamp((xc * yc).sum() / std::sqrt(sxx * syy), -1.0, 1.0);
}

double pearson(std::span<const double> x, std::span<const double> y);

/// Kendall tau-b with tie correction, by O(n^2) pair counting. Throws
/// UndefinedMetric when either input is entirely tied.
double kendall_tau(std::span<const double> x, std::span<const double> y);

// ---------------------------------------------------------------------------
// Region partition. Region 1: low zeta, high accuracy (trainable and
// resistant); 2: high zeta, high accuracy; 3: low zeta, low accuracy; 4: the
// rest. Boundaries count as low zeta / high accuracy.
// ---------------------------------------------------------------------------

struct Thresholds {
  double zeta = 0.0;
  double acc = 0.0;
};

inline int region_of(double zeta, double train_acc, const Thresholds& t) {
  const bool resistant = zeta <= t.zeta;
  const bool trainable = train_acc >= t.acc;
  if (resistant) return trainable ? 1 : 3;
  return trainable ? 2 : 4;
}

/// Means of zeta and train_acc over all records.
Thresholds mean_thresholds(std::span<const CheckpointRecord> records);

/// Linear-interpolated percentiles (0..100) of zeta and train_acc.
Thresholds percentile_thresholds(std::span<const CheckpointRecord> records, double zeta_pct,
                                 double acc_pct);

/// Empirical percentile with linear interpolation between order statistics.
double percentile(std::vector<double> values, double pct);

struct RegionPartition {
  Thresholds thresholds;
  std::vector<int> assignment;  // region in 1..4, parallel to the records
};

/// Thresholds default to mean_thresholds. Throws InvalidArgument on an empty set.
RegionPartition partition(std::span<const CheckpointRecord> records,
                          const std::optional<Thresholds>& thresholds = std::nullopt);

struct RegionStats {
  int region = 0;
  std::size_t count = 0;
  std::optional<double> mean_test_acc;  // absent for empty regions
  std::optional<double> std_test_acc;   // population standard deviation
};

/// Per-region test accuracy. Throws InvalidArgument if a record lacks test_acc.
std::array<RegionStats, 4> region_summary(const RegionPartition& partition,
                                          std::span<const CheckpointRecord> records);

// ---------------------------------------------------------------------------
// Zeta filtering.
// ---------------------------------------------------------------------------

/// Records with zeta <= threshold, in input order.
std::vector<CheckpointRecord> filter_by_zeta(std::span<const CheckpointRecord> records,
                                             double threshold);

struct MedianTag {};
inline constexpr MedianTag median_zeta{};

/// The ceil(N/2) records of lowest zeta (ties broken by run_id, then epoch),
/// in input order.
std::vector<CheckpointRecord> filter_by_zeta(std::span<const CheckpointRecord> records,
                                             MedianTag);

// ---------------------------------------------------------------------------
// Report.
// ---------------------------------------------------------------------------

struct CorrelationRow {
  std::string metric;
  std::optional<double> pearson;  // absent when undefined
  std::optional<double> kendall;
};

struct SelectionReport {
  std::size_t records = 0;
  Thresholds thresholds;
  std::string threshold_rule;  // "mean" or "percentile"
  std::array<RegionStats, 4> regions{};
  std::vector<CorrelationRow> correlations;  // each metric vs test_acc
  bool blind = false;
};

struct SelectionOptions {
  std::optional<std::array<double, 2>> percentiles;  // {zeta, acc}
  bool blind = false;
};

/// Partition, per-region summary and correlation of train_acc and zeta with
/// test_acc. In blind mode no test metric is read or emitted.
SelectionReport select_checkpoints(std::span<const CheckpointRecord> records,
                                   const SelectionOptions& options = {});

/// Pretty-printed JSON document.
std::string to_json(const SelectionReport& report);

}  // namespace memlab
