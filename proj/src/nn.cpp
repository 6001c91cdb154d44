#include "memlab/nn.hpp"

#include "memlab/rng.hpp"

#include <algorithm>
#include <numeric>

namespace memlab {

namespace {

std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t n) {
  auto eng = make_engine(derive_seed(derive_seed(seed, "shuffle"), epoch));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(idx[i - 1], idx[pick(eng)]);
  }
  return idx;
}

Matrix gather_rows(const Matrix& X, std::span<const std::size_t> rows) {
  Matrix out(Eigen::Index(rows.size()), X.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(Eigen::Index(r)) = X.row(Eigen::Index(rows[r]));
  return out;
}

MlpClassifier zeros_like(const MlpClassifier& model) {
  MlpClassifier z = model;
  for (auto& layer : z.layers) {
    layer.W.setZero();
    layer.b.setZero();
  }
  return z;
}

TwoLayerReluNet zeros_like(const TwoLayerReluNet& net) {
  TwoLayerReluNet z = net;
  z.W.setZero();
  return z;
}

std::optional<double> masked_accuracy(std::span<const int> predicted, std::span<const int> labels,
                                      const std::vector<bool>& mask) {
  if (std::none_of(mask.begin(), mask.end(), [](bool b) { return b; })) return std::nullopt;
  return accuracy(predicted, labels, mask);
}

}  // namespace

// --- two-layer net --------------------------------------------------------

TwoLayerReluNet init_two_layer(std::size_t d, std::size_t m, double kappa, std::uint64_t seed) {
  if (!(kappa > 0.0)) throw InvalidArgument("init_two_layer: kappa must be positive");
  if (kappa > 1.0) throw InvalidArgument("init_two_layer: kappa must be <= 1");
  if (m == 0 || d == 0) throw InvalidArgument("init_two_layer: d and m must be positive");

  TwoLayerReluNet net;
  net.kappa = kappa;
  net.W.resize(Eigen::Index(d), Eigen::Index(m));
  auto w_eng = make_engine(seed, "init/W");
  std::normal_distribution<double> gauss(0.0, kappa);
  for (auto& v : net.W.reshaped()) v = gauss(w_eng);
  auto a_eng = make_engine(seed, "init/a");
  std::bernoulli_distribution coin(0.5);
  net.a.resize(Eigen::Index(m));
  for (auto& v : net.a) v = coin(a_eng) ? 1.0 : -1.0;
  return net;
}

Matrix grad_two_layer(const TwoLayerReluNet& net, const Matrix& X, const Vector& labels) {
  if (X.rows() != labels.size()) {
    throw ShapeError("grad_two_layer: " + std::to_string(X.rows()) + " inputs but " +
                     std::to_string(labels.size()) + " labels");
  }
  if (X.cols() != net.input_dim()) throw ShapeError("grad_two_layer: input dimension mismatch");
  const double scale = 1.0 / std::sqrt(static_cast<double>(net.width()));
  const Matrix Z = X * net.W;
  const Vector residual = scale * (Z.cwiseMax(0.0) * net.a) - labels;
  // R(i, r) = residual_i * 1{z_ir >= 0} * a_r / sqrt(m)
  Matrix R = (Z.array() >= 0.0).cast<double>().matrix();
  R.array().colwise() *= residual.array();
  R.array().rowwise() *= (scale * net.a).transpose().array();
  return X.transpose() * R;
}

namespace {
constexpr Eigen::Index kStepperBlock = 256;  // hidden units per cache-resident block
}

Vector FullBatchStepper::forward(const TwoLayerReluNet& net) {
  if (X_.cols() != net.input_dim()) throw ShapeError("FullBatchStepper: input dimension mismatch");
  const Eigen::Index m = net.width();
  Vector f = Vector::Zero(X_.rows());
  for (Eigen::Index c0 = 0; c0 < m; c0 += kStepperBlock) {
    const Eigen::Index bs = std::min(kStepperBlock, m - c0);
    Z_.noalias() = X_ * net.W.middleCols(c0, bs);
    f.noalias() += Z_.cwiseMax(0.0) * net.a.segment(c0, bs);
  }
  return f / std::sqrt(static_cast<double>(m));
}

double FullBatchStepper::step(TwoLayerReluNet& net, const Vector& labels, double lr) {
  if (labels.size() != X_.rows()) throw ShapeError("FullBatchStepper: label count mismatch");
  const Vector residual = forward(net) - labels;
  if (lr != 0.0) {
    const Eigen::Index m = net.width();
    const double scale = 1.0 / std::sqrt(static_cast<double>(m));
    for (Eigen::Index c0 = 0; c0 < m; c0 += kStepperBlock) {
      const Eigen::Index bs = std::min(kStepperBlock, m - c0);
      auto Wb = net.W.middleCols(c0, bs);
      Z_.noalias() = X_ * Wb;
      // R(i, r) = residual_i * 1{z_ir >= 0} * a_r / sqrt(m)
      Z_ = (Z_.array() >= 0.0)
               .select(residual * (scale * net.a.segment(c0, bs)).transpose(), 0.0);
      Wb.noalias() -= lr * (X_.transpose() * Z_);
    }
  }
  return 0.5 * residual.squaredNorm();
}

// --- MLP -----------------------------------------------------------------

std::vector<std::size_t> MlpClassifier::hidden_sizes() const {
  std::vector<std::size_t> sizes;
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) sizes.push_back(std::size_t(layers[l].W.cols()));
  return sizes;
}

MlpClassifier init_mlp(std::size_t d, const std::vector<std::size_t>& hidden_sizes, int classes,
                       std::uint64_t seed) {
  if (d == 0) throw InvalidArgument("init_mlp: input dimension must be positive");
  if (classes < 2) throw InvalidArgument("init_mlp: need at least 2 classes");
  auto eng = make_engine(seed, "init/mlp");
  MlpClassifier model;
  std::size_t fan_in = d;
  auto add_layer = [&](std::size_t fan_out) {
    if (fan_out == 0) throw InvalidArgument("init_mlp: layer width must be positive");
    std::normal_distribution<double> gauss(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    DenseLayer layer{Matrix(Eigen::Index(fan_in), Eigen::Index(fan_out)),
                     Vector::Zero(Eigen::Index(fan_out))};
    for (auto& v : layer.W.reshaped()) v = gauss(eng);
    model.layers.push_back(std::move(layer));
    fan_in = fan_out;
  };
  for (auto h : hidden_sizes) add_layer(h);
  add_layer(std::size_t(classes));
  return model;
}

Matrix mlp_logits(const MlpClassifier& model, const Matrix& X) {
  if (X.cols() != model.input_dim()) {
    throw ShapeError("mlp_logits: input has " + std::to_string(X.cols()) + " columns, model expects " +
                     std::to_string(model.input_dim()));
  }
  Matrix A = X;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    Matrix Z = A * layer.W;
    Z.rowwise() += layer.b.transpose();
    if (l + 1 < model.layers.size()) Z = Z.cwiseMax(0.0);
    A = std::move(Z);
  }
  return A;
}

double cross_entropy(const Matrix& logits, std::span<const int> labels) {
  if (std::size_t(logits.rows()) != labels.size()) throw ShapeError("cross_entropy: row/label mismatch");
  if (labels.empty()) throw UndefinedMetric("cross_entropy: empty batch");
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
    total += lse - logits(i, labels[std::size_t(i)]);
  }
  return total / static_cast<double>(labels.size());
}

MlpLossAndGrad mlp_loss_and_grad(const MlpClassifier& model, const Matrix& X,
                                 std::span<const int> labels) {
  if (std::size_t(X.rows()) != labels.size()) throw ShapeError("mlp_loss_and_grad: row/label mismatch");
  if (X.cols() != model.input_dim()) throw ShapeError("mlp_loss_and_grad: input dimension mismatch");
  const std::size_t L = model.layers.size();
  std::vector<Matrix> acts;  // acts[l] is the input to layer l
  std::vector<Matrix> pre;   // pre-activations of hidden layers
  acts.reserve(L);
  acts.push_back(X);
  Matrix logits;
  for (std::size_t l = 0; l < L; ++l) {
    Matrix Z = acts.back() * model.layers[l].W;
    Z.rowwise() += model.layers[l].b.transpose();
    if (l + 1 < L) {
      acts.push_back(Z.cwiseMax(0.0));
      pre.push_back(std::move(Z));
    } else {
      logits = std::move(Z);
    }
  }

  const auto batch = static_cast<double>(X.rows());
  MlpLossAndGrad out{0.0, zeros_like(model)};
  Matrix delta(logits.rows(), logits.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(i).array() - mx).exp().matrix();
    const double s = e.sum();
    const int y = labels[std::size_t(i)];
    total += mx + std::log(s) - logits(i, y);
    delta.row(i) = e / s;
    delta(i, y) -= 1.0;
  }
  out.loss = total / batch;
  delta /= batch;

  for (std::size_t l = L; l-- > 0;) {
    out.grad.layers[l].W.noalias() = acts[l].transpose() * delta;
    out.grad.layers[l].b = delta.colwise().sum().transpose();
    if (l > 0) {
      Matrix back = delta * model.layers[l].W.transpose();
      back.array() *= (pre[l - 1].array() >= 0.0).cast<double>();
      delta = std::move(back);
    }
  }
  return out;
}

// --- objective / plain step ---------------------------------------------

double objective(const TwoLayerReluNet& net, const Matrix& X, const Vector& labels) {
  return squared_loss(forward_two_layer(net, X), labels);
}

double objective(const MlpClassifier& model, const Matrix& X, std::span<const int> labels) {
  return cross_entropy(mlp_logits(model, X), labels);
}

void plain_step(TwoLayerReluNet& net, const Matrix& X, const Vector& labels, double lr) {
  if (lr == 0.0) return;
  net.W -= lr * grad_two_layer(net, X, labels);
}

void plain_step(MlpClassifier& model, const Matrix& X, std::span<const int> labels, double lr) {
  if (lr == 0.0) return;
  const auto lg = mlp_loss_and_grad(model, X, labels);
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    model.layers[l].W -= lr * lg.grad.layers[l].W;
    model.layers[l].b -= lr * lg.grad.layers[l].b;
  }
}

// --- schedules -------------------------------------------------------------

void OptimizerConfig::validate() const {
  if (!(eta > 0.0)) throw InvalidArgument("optimizer: eta must be positive");
  if (schedule == Schedule::cosine_annealing && t_max == 0) {
    throw InvalidArgument("optimizer: t_max must be >= 1");
  }
  if (schedule == Schedule::exponential && !(gamma > 0.0 && gamma <= 1.0)) {
    throw InvalidArgument("optimizer: gamma must lie in (0, 1]");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("optimizer: momentum must lie in [0, 1)");
}

double lr_at(const OptimizerConfig& cfg, std::size_t t) {
  switch (cfg.schedule) {
    case Schedule::none:
      return cfg.eta;
    case Schedule::cosine_annealing:
      if (cfg.t_max == 0) throw InvalidArgument("lr_at: t_max must be >= 1");
      return cfg.eta * 0.5 *
             (1.0 + std::cos(M_PI * static_cast<double>(t) / static_cast<double>(cfg.t_max)));
    case Schedule::exponential:
      return cfg.eta * std::pow(cfg.gamma, static_cast<double>(t));
  }
  return cfg.eta;
}

// --- training --------------------------------------------------------------

TrainState<TwoLayerReluNet> make_train_state(TwoLayerReluNet net, std::uint64_t seed,
                                             std::string run_id) {
  TrainState<TwoLayerReluNet> st;
  st.velocity = zeros_like(net);
  st.model = std::move(net);
  st.seed = seed;
  st.run_id = std::move(run_id);
  return st;
}

TrainState<MlpClassifier> make_train_state(MlpClassifier model, std::uint64_t seed,
                                           std::string run_id) {
  TrainState<MlpClassifier> st;
  st.velocity = zeros_like(model);
  st.model = std::move(model);
  st.seed = seed;
  st.run_id = std::move(run_id);
  return st;
}

void gd_step(TrainState<TwoLayerReluNet>& state, const Matrix& X, const Vector& labels,
             const OptimizerConfig& cfg) {
  if (X.rows() != labels.size()) throw ShapeError("gd_step: input/label count mismatch");
  const double lr = lr_at(cfg, state.t);
  auto apply = [&](const Matrix& grad) {
    if (cfg.momentum > 0.0) {
      state.velocity.W = cfg.momentum * state.velocity.W + grad;
      state.model.W -= lr * state.velocity.W;
    } else {
      state.model.W -= lr * grad;
    }
  };
  if (cfg.batch_size == 0 || cfg.batch_size >= std::size_t(X.rows())) {
    if (lr != 0.0) apply(grad_two_layer(state.model, X, labels));
  } else {
    const auto order = epoch_order(state.seed, state.t, std::size_t(X.rows()));
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> rows(order.data() + start, stop - start);
      const Matrix xb = gather_rows(X, rows);
      Vector yb(static_cast<Eigen::Index>(rows.size()));
      for (std::size_t r = 0; r < rows.size(); ++r) yb(Eigen::Index(r)) = labels(Eigen::Index(rows[r]));
      if (lr != 0.0) apply(grad_two_layer(state.model, xb, yb));
    }
  }
  ++state.t;

  const Vector pred = forward_two_layer(state.model, X);
  CheckpointRecord rec;
  rec.run_id = state.run_id;
  rec.epoch = state.t;
  rec.lr = lr;
  rec.train_loss = squared_loss(pred, labels);
  std::size_t hits = 0;
  for (Eigen::Index i = 0; i < pred.size(); ++i) hits += ((pred(i) >= 0.0 ? 1.0 : -1.0) == labels(i));
  rec.train_acc = static_cast<double>(hits) / static_cast<double>(pred.size());
  state.records.push_back(std::move(rec));
}

void train_mlp_epoch(TrainState<MlpClassifier>& state, const LabeledDataset& ds,
                     const OptimizerConfig& cfg) {
  const double lr = lr_at(cfg, state.t);
  const std::size_t n = ds.size();
  const std::size_t bs = (cfg.batch_size == 0 || cfg.batch_size > n) ? n : cfg.batch_size;
  const auto order = epoch_order(state.seed, state.t, n);
  std::vector<int> yb;
  for (std::size_t start = 0; start < n; start += bs) {
    const std::size_t stop = std::min(n, start + bs);
    const std::span<const std::size_t> rows(order.data() + start, stop - start);
    const Matrix xb = gather_rows(ds.inputs, rows);
    yb.clear();
    for (auto r : rows) yb.push_back(ds.assigned_labels[r]);
    const auto lg = mlp_loss_and_grad(state.model, xb, yb);
    for (std::size_t l = 0; l < state.model.layers.size(); ++l) {
      auto& layer = state.model.layers[l];
      auto& vel = state.velocity.layers[l];
      const auto& g = lg.grad.layers[l];
      if (cfg.momentum > 0.0) {
        vel.W = cfg.momentum * vel.W + g.W;
        vel.b = cfg.momentum * vel.b + g.b;
        layer.W -= lr * vel.W;
        layer.b -= lr * vel.b;
      } else {
        layer.W -= lr * g.W;
        layer.b -= lr * g.b;
      }
    }
  }
  ++state.t;

  const Matrix logits = mlp_logits(state.model, ds.inputs);
  const auto predicted = argmax_rows(logits);
  CheckpointRecord rec;
  rec.run_id = state.run_id;
  rec.epoch = state.t;
  rec.lr = lr;
  rec.train_loss = cross_entropy(logits, ds.assigned_labels);
  rec.train_acc = accuracy(predicted, ds.assigned_labels);
  rec.train_acc_clean = masked_accuracy(predicted, ds.assigned_labels, ds.clean_mask());
  rec.train_acc_noisy = masked_accuracy(predicted, ds.assigned_labels, ds.mislabeled_mask());
  state.records.push_back(std::move(rec));
}

// --- accuracy --------------------------------------------------------------

std::vector<int> argmax_rows(const Matrix& scores) {
  std::vector<int> out(std::size_t(scores.rows()));
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < scores.cols(); ++j) {
      if (scores(i, j) > scores(i, best)) best = j;
    }
    out[std::size_t(i)] = static_cast<int>(best);
  }
  return out;
}

std::vector<int> predict(const TwoLayerReluNet& net, const Matrix& X) {
  const Vector f = forward_two_layer(net, X);
  std::vector<int> out(std::size_t(f.size()));
  for (Eigen::Index i = 0; i < f.size(); ++i) out[std::size_t(i)] = f(i) >= 0.0 ? 1 : -1;
  return out;
}

std::vector<int> predict(const MlpClassifier& model, const Matrix& X) {
  return argmax_rows(mlp_logits(model, X));
}

double accuracy(std::span<const int> predicted, std::span<const int> labels,
                const std::optional<std::vector<bool>>& mask) {
  if (predicted.size() != labels.size()) throw ShapeError("accuracy: prediction/label length mismatch");
  if (mask && mask->size() != labels.size()) throw ShapeError("accuracy: mask length mismatch");
  std::size_t hits = 0;
  std::size_t total = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (mask && !(*mask)[i]) continue;
    ++total;
    hits += predicted[i] == labels[i];
  }
  if (total == 0) throw UndefinedMetric("accuracy: mask selects no samples");
  return static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace memlab
