#include "memlab/susceptibility.hpp"

#include "memlab/errors.hpp"

namespace memlab {

double SusceptibilityTracker::push(double increment) {
  ++t;
  increments.push_back(increment);
  const auto tt = static_cast<double>(t);
  zeta = ((tt - 1.0) * zeta + increment) / tt;
  return zeta;
}

namespace {

template <typename Model, typename Labels>
double probe_impl(const Model& model, SusceptibilityTracker& tracker, const Labels& labels,
                  double scheduled_lr) {
  const auto& X = tracker.probe.inputs;
  const double before = objective(model, X, labels);
  Model probed = model;
  plain_step(probed, X, labels, tracker.probe_lr(scheduled_lr));
  const double after = objective(probed, X, labels);
  const double increment = before - after;
  tracker.push(increment);
  return increment;
}

template <typename Model, typename Labels, typename Fitted>
std::size_t resistance_impl(const Model& model, const Matrix& X, const Labels& labels,
                            const ResistanceOptions& options, Fitted fitted) {
  if (options.max_steps == 0) throw InvalidArgument("multi_step_resistance: max_steps must be >= 1");
  Model work = model;
  for (std::size_t step = 0; step <= options.max_steps; ++step) {
    if (fitted(work)) return step;
    if (step == options.max_steps) break;
    plain_step(work, X, labels, options.lr);
  }
  return options.max_steps + 1;
}

}  // namespace

double probe_step(const TwoLayerReluNet& net, SusceptibilityTracker& tracker, double scheduled_lr) {
  if (net.W.size() == 0) throw StateError("probe_step: model is not initialised");
  if (!tracker.probe.binary) throw StateError("probe_step: two-layer net needs a binary probe batch");
  return probe_impl(net, tracker, tracker.probe.label_vector(), scheduled_lr);
}

double probe_step(const MlpClassifier& model, SusceptibilityTracker& tracker, double scheduled_lr) {
  if (model.layers.empty()) throw StateError("probe_step: model is not initialised");
  if (tracker.probe.binary) throw StateError("probe_step: MLP needs a class-index probe batch");
  return probe_impl(model, tracker, tracker.probe.random_labels, scheduled_lr);
}

std::vector<std::pair<std::size_t, double>> zeta_series(const SusceptibilityTracker& tracker) {
  std::vector<std::pair<std::size_t, double>> out;
  out.reserve(tracker.increments.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < tracker.increments.size(); ++i) {
    sum += tracker.increments[i];
    out.emplace_back(i + 1, sum / static_cast<double>(i + 1));
  }
  return out;
}

std::size_t multi_step_resistance(const MlpClassifier& model, const Eigen::RowVectorXd& x, int label,
                                  const ResistanceOptions& options) {
  const Matrix X = x;
  const std::vector<int> labels{label};
  return resistance_impl(model, X, labels, options, [&](const MlpClassifier& m) {
    if (options.fit_threshold) return objective(m, X, labels) <= *options.fit_threshold;
    return predict(m, X).front() == label;
  });
}

std::size_t multi_step_resistance(const TwoLayerReluNet& net, const Eigen::RowVectorXd& x, int label,
                                  const ResistanceOptions& options) {
  const Matrix X = x;
  Vector labels(1);
  labels(0) = label;
  return resistance_impl(net, X, labels, options, [&](const TwoLayerReluNet& m) {
    if (options.fit_threshold) return objective(m, X, labels) <= *options.fit_threshold;
    return predict(m, X).front() == label;
  });
}

}  // namespace memlab
