#include "memlab/ntk.hpp"

#include "memlab/nn.hpp"
#include "memlab/rng.hpp"

#include <Eigen/Jacobi>

#include <algorithm>
#include <numeric>

namespace memlab {

GramMcEstimate gram_entry_monte_carlo(const Vector& xi, const Vector& xj, std::size_t samples,
                                      std::uint64_t seed) {
  if (xi.size() != xj.size()) throw ShapeError("gram_entry_monte_carlo: dimension mismatch");
  if (samples == 0) throw InvalidArgument("gram_entry_monte_carlo: need at least one sample");
  const double t = xi.dot(xj);
  auto eng = make_engine(seed, "gram/mc");
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vector w(xi.size());
  std::size_t both = 0;
  for (std::size_t s = 0; s < samples; ++s) {
    for (auto& v : w) v = gauss(eng);
    both += (w.dot(xi) >= 0.0 && w.dot(xj) >= 0.0);
  }
  const double frac = static_cast<double>(both) / static_cast<double>(samples);
  Matrix pair(2, xi.size());
  pair.row(0) = xi.transpose();
  pair.row(1) = xj.transpose();
  GramMcEstimate out;
  out.closed_form = gram_infinity(pair, 1e-6)(0, 1);
  out.estimate = t * frac;
  out.std_error = std::abs(t) * std::sqrt(frac * (1.0 - frac) / static_cast<double>(samples));
  return out;
}

GramSpectrum eigendecompose(const Matrix& H, const JacobiOptions& options) {
  if (H.rows() != H.cols()) throw ShapeError("eigendecompose: matrix is not square");
  const Eigen::Index n = H.rows();
  if (n == 0) throw InvalidArgument("eigendecompose: empty matrix");
  const double scale = std::max(1.0, H.cwiseAbs().maxCoeff());
  if ((H - H.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw InvalidArgument("eigendecompose: matrix is not symmetric");
  }

  Matrix A = (H + H.transpose()) / 2.0;
  Matrix V = Matrix::Identity(n, n);
  const double target = options.tolerance * A.norm();
  auto off_norm = [&] {
    double s = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index i = 0; i < j; ++i) s += 2.0 * A(i, j) * A(i, j);
    }
    return std::sqrt(s);
  };

  std::size_t sweep = 0;
  while (off_norm() > target) {
    if (sweep == options.max_sweeps) {
      throw NumericError("eigendecompose: Jacobi sweeps did not converge after " +
                         std::to_string(sweep) + " sweeps");
    }
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (A(p, q) == 0.0) continue;
        Eigen::JacobiRotation<double> J;
        J.makeJacobi(A, p, q);
        A.applyOnTheLeft(p, q, J.adjoint());
        A.applyOnTheRight(p, q, J);
        A(p, q) = A(q, p) = 0.0;
        V.applyOnTheRight(p, q, J);
      }
    }
    ++sweep;
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return A(a, a) < A(b, b); });

  GramSpectrum out;
  out.eigenvalues.resize(n);
  out.eigenvectors.resize(n, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const Eigen::Index src = order[std::size_t(c)];
    out.eigenvalues(c) = A(src, src);
    Vector v = V.col(src);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (std::abs(v(i)) > 1e-12) {
        if (v(i) < 0.0) v = -v;
        break;
      }
    }
    out.eigenvectors.col(c) = v;
  }
  return out;
}

Vector projections(const GramSpectrum& spectrum, const Vector& y) {
  if (y.size() != spectrum.size()) {
    throw ShapeError("projections: vector of length " + std::to_string(y.size()) +
                     " against spectrum of size " + std::to_string(spectrum.size()));
  }
  return spectrum.eigenvectors.transpose() * y;
}

void check_regime(const GramSpectrum& spectrum, double eta) {
  if (!(eta > 0.0)) throw InvalidArgument("learning rate must be positive");
  if (!(eta * spectrum.lambda_max() < 1.0)) {
    throw InvalidArgument("eta * lambda_max = " + std::to_string(eta * spectrum.lambda_max()) +
                          " >= 1: gradient descent diverges in this regime");
  }
}

namespace {

// (1 - eta l_i)^e for every eigenvalue.
Vector decay(const GramSpectrum& spectrum, double eta, double exponent) {
  return (1.0 - eta * spectrum.eigenvalues.array()).pow(exponent).matrix();
}

double phi_tilde_sum(const GramSpectrum& spectrum, const Vector& p, const Vector& p_tilde,
                     const Horizon& h) {
  const Vector after_k = decay(spectrum, h.eta, double(h.k));
  const Vector after_kt = decay(spectrum, h.eta, 2.0 * double(h.k_tilde));
  const Vector bracket = p - p_tilde - after_k.cwiseProduct(p);
  return bracket.array().square().cwiseProduct(after_kt.array()).sum();
}

}  // namespace

double residual_norm_closed_form(const GramSpectrum& spectrum, const Vector& y, const Vector& y_tilde,
                     const Horizon& h) {
  check_regime(spectrum, h.eta);
  return std::sqrt(phi_tilde_sum(spectrum, projections(spectrum, y), projections(spectrum, y_tilde), h));
}

double phi_tilde_approx(const GramSpectrum& spectrum, const Vector& p, const Vector& p_tilde,
                        const Horizon& h) {
  check_regime(spectrum, h.eta);
  if (p.size() != spectrum.size() || p_tilde.size() != spectrum.size()) {
    throw ShapeError("phi_tilde_approx: projection length mismatch");
  }
  return 0.5 * phi_tilde_sum(spectrum, p, p_tilde, h);
}

double mu(const GramSpectrum& spectrum, const Vector& expected_p2, const Horizon& h) {
  check_regime(spectrum, h.eta);
  if (expected_p2.size() != spectrum.size()) throw ShapeError("mu: E[p^2] length mismatch");
  if ((expected_p2.array() < 0.0).any()) throw InvalidArgument("mu: E[p^2] must be non-negative");
  const Vector gain = (1.0 - decay(spectrum, h.eta, double(h.k)).array()).square().matrix();
  const Vector after_kt = decay(spectrum, h.eta, 2.0 * double(h.k_tilde));
  return (expected_p2.array() * gain.array() * after_kt.array()).sum();
}

double base_term(const GramSpectrum& spectrum, double eta, std::size_t k_tilde) {
  check_regime(spectrum, eta);
  return 0.5 * decay(spectrum, eta, 2.0 * double(k_tilde)).sum();
}

void BoundParams::validate() const {
  if (!(eta > 0.0)) throw InvalidArgument("bounds: eta must be positive");
  if (!(delta > 0.0 && delta < 1.0)) throw InvalidArgument("bounds: delta must lie in (0, 1)");
  if (draws < 2) throw InvalidArgument("bounds: need at least 2 draws to estimate a variance");
  if (k_tilde_grid.empty() || lnl_grid.empty()) throw InvalidArgument("bounds: empty grid");
  for (double l : lnl_grid) {
    if (!(l >= 0.0 && l <= 1.0)) throw InvalidArgument("bounds: lnl values must lie in [0, 1]");
  }
}

Vector bound_label_draw(const LabeledDataset& ds, double lnl, std::uint64_t seed, std::size_t j) {
  return noisy_binary_label_vector(ds, lnl, derive_seed(derive_seed(seed, "bounds/y"), j));
}

Vector bound_probe_draw(std::size_t n, std::uint64_t seed, std::size_t j) {
  return random_sign_vector(n, derive_seed(derive_seed(seed, "bounds/y~"), j));
}

std::vector<BoundPoint> bound_curves(const GramSpectrum& spectrum, const LabeledDataset& ds,
                                     const BoundParams& params) {
  params.validate();
  check_regime(spectrum, params.eta);
  const auto n = std::size_t(spectrum.size());
  if (ds.size() != n) throw ShapeError("bound_curves: dataset size does not match spectrum");

  std::vector<Vector> p_tilde(params.draws);
  for (std::size_t j = 0; j < params.draws; ++j) {
    p_tilde[j] = projections(spectrum, bound_probe_draw(n, params.seed, j));
  }

  std::vector<BoundPoint> out;
  out.reserve(params.lnl_grid.size() * params.k_tilde_grid.size());
  for (double lnl : params.lnl_grid) {
    std::vector<Vector> p(params.draws);
    Vector expected_p2 = Vector::Zero(Eigen::Index(n));
    for (std::size_t j = 0; j < params.draws; ++j) {
      p[j] = projections(spectrum, bound_label_draw(ds, lnl, params.seed, j));
      expected_p2 += p[j].cwiseAbs2();
    }
    expected_p2 /= double(params.draws);

    for (std::size_t kt : params.k_tilde_grid) {
      const Horizon h{params.eta, params.k, kt};
      BoundPoint pt;
      pt.lnl = lnl;
      pt.k_tilde = kt;
      pt.mu_half = 0.5 * mu(spectrum, expected_p2, h);
      double mean = 0.0;
      std::vector<double> values(params.draws);
      for (std::size_t j = 0; j < params.draws; ++j) {
        values[j] = phi_tilde_approx(spectrum, p[j], p_tilde[j], h);
        mean += values[j];
      }
      mean /= double(params.draws);
      double ss = 0.0;
      for (double v : values) ss += (v - mean) * (v - mean);
      pt.sigma = ss / double(params.draws - 1);
      const double half_width = std::sqrt(pt.sigma / params.delta);
      pt.lower = pt.mu_half - half_width;
      pt.upper = pt.mu_half + half_width;
      pt.base = base_term(spectrum, params.eta, kt);
      out.push_back(pt);
    }
  }
  return out;
}

double default_validation_eta(const GramSpectrum& spectrum, std::size_t n) {
  const double eta =
      kValidationEtaAdjustment * spectrum.lambda_min() / (2.0 * double(n) * double(n));
  return std::min(eta, 0.5 / spectrum.lambda_max());
}

ValidationReport validate_against_gd(const ValidationParams& params) {
  if (params.k_tilde_grid.empty()) throw InvalidArgument("validate_against_gd: empty k~ grid");
  const auto ds = synth_sphere_dataset(params.n, params.d, derive_seed(params.seed, "validate/data"));
  const Vector y = noisy_binary_label_vector(ds, params.lnl, derive_seed(params.seed, "validate/noise"));
  const Vector y_tilde = random_sign_vector(params.n, derive_seed(params.seed, "validate/probe"));
  const auto spectrum = eigendecompose(gram_infinity(ds.inputs));

  ValidationReport report;
  report.params = params;
  report.eta = params.eta > 0.0 ? params.eta : default_validation_eta(spectrum, params.n);
  report.lambda_min = spectrum.lambda_min();
  report.lambda_max = spectrum.lambda_max();
  check_regime(spectrum, report.eta);

  auto net = init_two_layer(params.d, params.m, params.kappa, derive_seed(params.seed, "validate/init"));
  const Matrix& X = ds.inputs;
  FullBatchStepper stepper(X);
  auto guard = [&](double loss, double initial, std::size_t step) {
    if (!std::isfinite(loss) || loss > 10.0 * initial) {
      throw NumericError("validate_against_gd: loss diverged at step " + std::to_string(step) +
                         " (eta = " + std::to_string(report.eta) + "); use a smaller eta");
    }
  };

  const double phi0 = std::max(objective(net, X, y), 1e-300);
  for (std::size_t t = 0; t < params.k; ++t) guard(stepper.step(net, y, report.eta), phi0, t);

  auto grid = params.k_tilde_grid;
  std::sort(grid.begin(), grid.end());
  const double phi_k = std::max(objective(net, X, y_tilde), 1e-300);
  std::size_t done = 0;
  for (std::size_t kt : grid) {
    while (done < kt) {
      guard(stepper.step(net, y_tilde, report.eta), phi_k, params.k + done);
      ++done;
    }
    ValidationRow row;
    row.k_tilde = kt;
    row.actual = (stepper.forward(net) - y_tilde).norm();
    row.predicted = residual_norm_closed_form(spectrum, y, y_tilde, Horizon{report.eta, params.k, kt});
    row.relative_error = std::abs(row.predicted - row.actual) / row.actual;
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace memlab
