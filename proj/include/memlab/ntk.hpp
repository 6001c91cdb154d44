#pragma once

#include "memlab/data.hpp"
#include "memlab/errors.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

namespace memlab {

/// Infinite-width Gram matrix of the two-layer ReLU network,
///   H(i, j) = t (pi - arccos t) / (2 pi),  t = x_i . x_j,
/// for unit-norm rows of X. Inner products are clamped to [-1, 1] and the
/// result is symmetrized.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> gram_infinity(
    const Eigen::MatrixBase<Derived>& X, typename Derived::Scalar unit_tol = 1e-6) {
  using Scalar = typename Derived::Scalar;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const Scalar norm = X.row(i).norm();
    if (std::abs(norm - Scalar(1)) > unit_tol) {
      throw InvalidArgument("gram_infinity: row " + std::to_string(i) + " has norm " +
                            std::to_string(double(norm)) + ", expected 1");
    }
  }
  const Scalar pi = std::numbers::pi_v<Scalar>;
  // acos loses half the digits near t = 1; there the angle comes from
  // 2 atan2(|x_i - x_j|, |x_i + x_j|) instead, which is exact on the diagonal.
  const Scalar near_parallel = Scalar(1) - Scalar(1e-4);
  const Mat T = (X * X.transpose()).eval();
  Mat H(T.rows(), T.cols());
  for (Eigen::Index j = 0; j < T.cols(); ++j) {
    for (Eigen::Index i = 0; i < T.rows(); ++i) {
      const Scalar c = std::clamp(T(i, j), Scalar(-1), Scalar(1));
      Scalar angle;
      if (i == j) {
        angle = Scalar(0);
      } else if (c > near_parallel) {
        angle = Scalar(2) * std::atan2((X.row(i) - X.row(j)).norm(), (X.row(i) + X.row(j)).norm());
      } else {
        angle = std::acos(c);
      }
      H(i, j) = c * (pi - angle) / (Scalar(2) * pi);
    }
  }
  return (H + H.transpose()) / Scalar(2);
}

/// Monte Carlo estimate of E_w[x_i.x_j 1{w.x_i >= 0, w.x_j >= 0}], w ~ N(0, I).
struct GramMcEstimate {
  double closed_form = 0.0;
  double estimate = 0.0;
  double std_error = 0.0;
  double gap() const { return std::abs(closed_form - estimate); }
};

GramMcEstimate gram_entry_monte_carlo(const Vector& xi, const Vector& xj, std::size_t samples,
                                      std::uint64_t seed);

/// Eigen-decomposition of a symmetric Gram matrix. Eigenvalues ascend
/// (eigenvalues(0) is lambda_min); column i of eigenvectors is v_i, with its
/// first non-negligible component positive.
struct GramSpectrum {
  Vector eigenvalues;
  Matrix eigenvectors;

  Eigen::Index size() const { return eigenvalues.size(); }
  double lambda_min() const { return eigenvalues(0); }
  double lambda_max() const { return eigenvalues(eigenvalues.size() - 1); }
};

struct JacobiOptions {
  std::size_t max_sweeps = 100;
  double tolerance = 1e-12;  // off-diagonal Frobenius mass relative to ||H||_F
};

/// Cyclic Jacobi eigensolver. Throws InvalidArgument for a non-symmetric
/// input and NumericError if it has not converged after max_sweeps.
GramSpectrum eigendecompose(const Matrix& H, const JacobiOptions& options = {});

/// p = V^T y.
Vector projections(const GramSpectrum& spectrum, const Vector& y);

/// Step-size/horizon triple shared by the closed-form predictions.
struct Horizon {
  double eta = 0.0;
  std::size_t k = 0;        // steps on the training labels
  std::size_t k_tilde = 0;  // subsequent steps on the random labels
};

/// Throws InvalidArgument unless 0 < eta * lambda_max < 1.
void check_regime(const GramSpectrum& spectrum, double eta);

/// Closed-form prediction of ||f_{W(k + k~)} - y~||_2 for an infinitely wide
/// network started at zero output.
double residual_norm_closed_form(const GramSpectrum& spectrum, const Vector& y, const Vector& y_tilde,
                     const Horizon& h);

/// 1/2 sum_i [p_i - p~_i - (1 - eta l_i)^k p_i]^2 (1 - eta l_i)^{2 k~}
double phi_tilde_approx(const GramSpectrum& spectrum, const Vector& p, const Vector& p_tilde,
                        const Horizon& h);

/// sum_i E[p_i^2] [1 - (1 - eta l_i)^k]^2 (1 - eta l_i)^{2 k~}
double mu(const GramSpectrum& spectrum, const Vector& expected_p2, const Horizon& h);

/// 1/2 sum_i (1 - eta l_i)^{2 k~}; label independent.
double base_term(const GramSpectrum& spectrum, double eta, std::size_t k_tilde);

struct BoundParams {
  double eta = 1e-6;
  std::size_t k = 10000;
  std::vector<std::size_t> k_tilde_grid;
  double delta = 0.05;
  std::vector<double> lnl_grid;
  std::size_t draws = 10;
  std::uint64_t seed = 0;

  void validate() const;
};

struct BoundPoint {
  double lnl = 0.0;
  std::size_t k_tilde = 0;
  double mu_half = 0.0;
  double sigma = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double base = 0.0;
};

/// Chebyshev band mu/2 -+ sqrt(Sigma/delta) around the label-independent
/// base term, per (lnl, k~). E[p_i^2] and Sigma are Monte Carlo estimates
/// over `draws` joint draws of the noisy label vector y (built from
/// `ds` true labels at the given noise level) and a random sign vector y~.
/// Draw j uses the same random stream at every noise level.
std::vector<BoundPoint> bound_curves(const GramSpectrum& spectrum, const LabeledDataset& ds,
                                     const BoundParams& params);

/// Label draws used by bound_curves for draw index j.
Vector bound_label_draw(const LabeledDataset& ds, double lnl, std::uint64_t seed, std::size_t j);
Vector bound_probe_draw(std::size_t n, std::uint64_t seed, std::size_t j);

struct ValidationParams {
  std::size_t n = 32;
  std::size_t d = 16;
  std::size_t m = 16384;
  double kappa = 1e-3;
  double eta = 0.0;  // 0 = default_validation_eta
  std::size_t k = 200;
  std::vector<std::size_t> k_tilde_grid{0, 100, 400};
  double lnl = 0.0;
  std::uint64_t seed = 0;
};

struct ValidationRow {
  std::size_t k_tilde = 0;
  double predicted = 0.0;  // closed-form ||f - y~||
  double actual = 0.0;     // measured ||f - y~|| after two-phase GD
  double relative_error = 0.0;
  double actual_phi_tilde() const { return 0.5 * actual * actual; }
};

struct ValidationReport {
  ValidationParams params;
  double eta = 0.0;
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  std::vector<ValidationRow> rows;
};

/// At lambda_min / (2 n^2) the outputs barely move in k + k~ steps and the
/// comparison is dominated by the width-independent initial output; ten
/// times that keeps the network lazy while the dynamics dominate.
inline constexpr double kValidationEtaAdjustment = 10.0;

/// Default step size for the GD-vs-theory comparison:
/// min(kValidationEtaAdjustment * lambda_min / (2 n^2), 0.5 / lambda_max).
double default_validation_eta(const GramSpectrum& spectrum, std::size_t n);

/// Builds a synthetic sphere dataset, runs k full-batch GD steps on the noisy
/// labels and then k~ steps on random labels with a real two-layer network,
/// and compares ||f - y~|| with the closed form at each requested k~.
/// Dataset, noise, probe labels and init use independent streams of `seed`,
/// so reports that differ only in lnl or m share all other randomness.
ValidationReport validate_against_gd(const ValidationParams& params);

}  // namespace memlab
