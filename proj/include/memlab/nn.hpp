#pragma once

#include "memlab/data.hpp"
#include "memlab/errors.hpp"
#include "memlab/records.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace memlab {

// ---------------------------------------------------------------------------
// Two-layer ReLU network with a frozen +-1 output layer (NTK mode).
//   f(x) = m^{-1/2} * sum_r a_r * relu(w_r . x)
// W holds one hidden unit per column.
// ---------------------------------------------------------------------------

struct TwoLayerReluNet {
  Matrix W;  // d x m
  Vector a;  // m, entries in {-1, +1}; never updated
  double kappa = 1.0;

  Eigen::Index width() const { return W.cols(); }
  Eigen::Index input_dim() const { return W.rows(); }
};

TwoLayerReluNet init_two_layer(std::size_t d, std::size_t m, double kappa, std::uint64_t seed);

template <typename Derived>
Vector forward_two_layer(const TwoLayerReluNet& net, const Eigen::MatrixBase<Derived>& X) {
  if (X.cols() != net.input_dim()) {
    throw ShapeError("forward_two_layer: input has " + std::to_string(X.cols()) +
                     " columns, network expects " + std::to_string(net.input_dim()));
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(net.width()));
  return scale * ((X * net.W).cwiseMax(0.0) * net.a);
}

/// 1/2 * ||pred - labels||^2
template <typename A, typename B>
double squared_loss(const Eigen::MatrixBase<A>& pred, const Eigen::MatrixBase<B>& labels) {
  if (pred.size() != labels.size()) {
    throw ShapeError("squared_loss: lengths " + std::to_string(pred.size()) + " and " +
                     std::to_string(labels.size()) + " differ");
  }
  return 0.5 * (pred - labels).squaredNorm();
}

/// Gradient of 1/2 ||f_W(X) - labels||^2 with respect to W (d x m). The ReLU
/// derivative at 0 is taken as 1.
Matrix grad_two_layer(const TwoLayerReluNet& net, const Matrix& X, const Vector& labels);

/// Full-batch gradient descent on a fixed input matrix with a reusable n x m
/// buffer. Produces the same update as grad_two_layer but without per-step
/// allocations; used for the wide-network runs.
class FullBatchStepper {
 public:
  explicit FullBatchStepper(const Matrix& X) : X_(X) {}

  /// W <- W - lr * grad. Returns the loss at the weights before the update.
  double step(TwoLayerReluNet& net, const Vector& labels, double lr);
  Vector forward(const TwoLayerReluNet& net);

 private:
  const Matrix& X_;
  Matrix Z_;
};

// ---------------------------------------------------------------------------
// Multi-class MLP: ReLU hidden layers, linear c-way head, softmax
// cross-entropy averaged over the batch.
// ---------------------------------------------------------------------------

struct DenseLayer {
  Matrix W;  // fan_in x fan_out
  Vector b;  // fan_out
};

struct MlpClassifier {
  std::vector<DenseLayer> layers;

  Eigen::Index input_dim() const { return layers.front().W.rows(); }
  Eigen::Index num_classes() const { return layers.back().W.cols(); }
  std::vector<std::size_t> hidden_sizes() const;
};

/// He-scaled Gaussian weights, zero biases.
MlpClassifier init_mlp(std::size_t d, const std::vector<std::size_t>& hidden_sizes, int classes,
                       std::uint64_t seed);

Matrix mlp_logits(const MlpClassifier& model, const Matrix& X);

/// Mean softmax cross-entropy of the logits against integer labels.
double cross_entropy(const Matrix& logits, std::span<const int> labels);

struct MlpLossAndGrad {
  double loss = 0.0;
  MlpClassifier grad;  // same shapes as the model
};

MlpLossAndGrad mlp_loss_and_grad(const MlpClassifier& model, const Matrix& X,
                                 std::span<const int> labels);

// ---------------------------------------------------------------------------
// Objective and plain update, overloaded per model kind. These are the two
// primitives the susceptibility probe needs.
// ---------------------------------------------------------------------------

double objective(const TwoLayerReluNet& net, const Matrix& X, const Vector& labels);
double objective(const MlpClassifier& model, const Matrix& X, std::span<const int> labels);

/// One plain gradient step, no momentum.
void plain_step(TwoLayerReluNet& net, const Matrix& X, const Vector& labels, double lr);
void plain_step(MlpClassifier& model, const Matrix& X, std::span<const int> labels, double lr);

// ---------------------------------------------------------------------------
// Optimizer configuration and learning-rate schedules.
// ---------------------------------------------------------------------------

enum class Schedule { none, cosine_annealing, exponential };

struct OptimizerConfig {
  double eta = 0.1;
  Schedule schedule = Schedule::none;
  std::size_t t_max = 1;
  double gamma = 1.0;
  double momentum = 0.0;
  std::size_t batch_size = 0;  // 0 = full batch
  std::size_t epochs = 0;

  void validate() const;
};

double lr_at(const OptimizerConfig& cfg, std::size_t t);

// ---------------------------------------------------------------------------
// Training state. Single owner; advanced in place one epoch at a time.
// ---------------------------------------------------------------------------

template <typename Model>
struct TrainState {
  Model model;
  Model velocity;  // momentum buffer, zero-initialised
  std::size_t t = 0;
  std::vector<CheckpointRecord> records;
  std::uint64_t seed = 0;  // shuffling stream
  std::string run_id;
};

TrainState<TwoLayerReluNet> make_train_state(TwoLayerReluNet net, std::uint64_t seed,
                                             std::string run_id = {});
TrainState<MlpClassifier> make_train_state(MlpClassifier model, std::uint64_t seed,
                                           std::string run_id = {});

/// One epoch of gradient descent on the squared loss: a single full-batch
/// step when cfg.batch_size == 0, otherwise a shuffled pass of mini-batches.
/// Appends a record with the end-of-epoch loss and accuracy.
void gd_step(TrainState<TwoLayerReluNet>& state, const Matrix& X, const Vector& labels,
             const OptimizerConfig& cfg);

/// One shuffled mini-batch SGD pass over ds (cross-entropy), then appends a
/// record with full-dataset loss and accuracies. Zeta and test fields are
/// left for the caller.
void train_mlp_epoch(TrainState<MlpClassifier>& state, const LabeledDataset& ds,
                     const OptimizerConfig& cfg);

// ---------------------------------------------------------------------------
// Accuracy.
// ---------------------------------------------------------------------------

/// Sign predictions in {-1, +1}; output 0 maps to +1.
std::vector<int> predict(const TwoLayerReluNet& net, const Matrix& X);
/// Argmax predictions, lowest index wins ties.
std::vector<int> predict(const MlpClassifier& model, const Matrix& X);

std::vector<int> argmax_rows(const Matrix& scores);

/// Fraction of (masked) positions where predicted == labels. Throws
/// UndefinedMetric when the mask selects nothing.
double accuracy(std::span<const int> predicted, std::span<const int> labels,
                const std::optional<std::vector<bool>>& mask = std::nullopt);

template <typename Model>
double accuracy(const Model& model, const Matrix& X, std::span<const int> labels,
                const std::optional<std::vector<bool>>& mask = std::nullopt) {
  return accuracy(predict(model, X), labels, mask);
}

}  // namespace memlab
