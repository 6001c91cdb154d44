#pragma once

#include "memlab/data.hpp"
#include "memlab/nn.hpp"

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

namespace memlab {

enum class ProbeEtaSource { same_as_training, fixed };

/// Running susceptibility zeta(t): the average, over epochs, of the drop in
/// the probe-batch loss caused by a single update on the randomly labelled
/// probe batch. The update is taken on a copy; the tracked model is never
/// modified.
struct SusceptibilityTracker {
  ProbeBatch probe;
  ProbeEtaSource eta_source = ProbeEtaSource::same_as_training;
  double fixed_eta = 0.0;
  std::size_t t = 0;
  double zeta = 0.0;
  std::vector<double> increments;

  explicit SusceptibilityTracker(ProbeBatch batch,
                                 ProbeEtaSource source = ProbeEtaSource::same_as_training,
                                 double eta = 0.0)
      : probe(std::move(batch)), eta_source(source), fixed_eta(eta) {}

  double probe_lr(double scheduled_lr) const {
    return eta_source == ProbeEtaSource::fixed ? fixed_eta : scheduled_lr;
  }

  /// Folds one increment into zeta with the running-mean recurrence.
  double push(double increment);
};

/// Probe measurement at the current weights. `scheduled_lr` is the learning
/// rate of the epoch that just finished. Returns the increment
/// loss(W) - loss(W~) and advances the tracker.
double probe_step(const TwoLayerReluNet& net, SusceptibilityTracker& tracker, double scheduled_lr);
double probe_step(const MlpClassifier& model, SusceptibilityTracker& tracker, double scheduled_lr);

/// (t, zeta(t)) for t = 1..T, computed as prefix means of the increments.
std::vector<std::pair<std::size_t, double>> zeta_series(const SusceptibilityTracker& tracker);

struct ResistanceOptions {
  std::size_t max_steps = 100;
  double lr = 0.1;
  std::optional<double> fit_threshold;  // loss-based fit instead of argmax flip
};

/// Number of plain steps on a single sample with the given label until the
/// model fits it (argmax equals the label, or loss <= threshold). 0 if it is
/// already fitted; max_steps + 1 if not fitted within max_steps.
std::size_t multi_step_resistance(const MlpClassifier& model, const Eigen::RowVectorXd& x, int label,
                                  const ResistanceOptions& options);
std::size_t multi_step_resistance(const TwoLayerReluNet& net, const Eigen::RowVectorXd& x, int label,
                                  const ResistanceOptions& options);

}  // namespace memlab
