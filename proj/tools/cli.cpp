#include "cli.hpp"

#include "memlab/experiment.hpp"
#include "memlab/ntk.hpp"
#include "memlab/rng.hpp"
#include "memlab/selection.hpp"

#include <CLI11.hpp>
#include <glob.h>

#include <algorithm>
#include <atomic>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <thread>

namespace memlab::cli {

namespace {

/// Output target: a file when a path is given, otherwise the command stream.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) : stream_(&fallback) {
    if (path.empty() || path == "-") return;
    const std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    file_.open(p, std::ios::binary);
    if (!file_) throw FormatError(path + ": cannot open for writing");
    stream_ = &file_;
  }
  std::ostream& get() { return *stream_; }

 private:
  std::ofstream file_;
  std::ostream* stream_;
};

template <typename T>
std::string join(const std::vector<T>& v) {
  std::ostringstream s;
  for (std::size_t i = 0; i < v.size(); ++i) s << (i ? "," : "") << v[i];
  return s.str();
}

// --- train -----------------------------------------------------------------

struct TrainFlags {
  std::vector<std::string> configs;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<double> eta;
  std::optional<double> lnl;
  std::string out;
  std::size_t jobs = 1;
};

int cmd_train(const TrainFlags& f, std::ostream& out, std::ostream& err) {
  if (!f.out.empty() && f.configs.size() > 1) {
    throw InvalidArgument("--out names a single file; set output.run_log_path per config instead");
  }
  std::vector<RunConfig> runs;
  for (const auto& path : f.configs) {
    RunConfig c = load_run_config(path);
    for (const auto& o : f.overrides) apply_override(c, o);
    if (f.seed) apply_override(c, "seed=" + std::to_string(*f.seed));
    if (f.epochs) apply_override(c, "optimizer.epochs=" + std::to_string(*f.epochs));
    if (f.eta) apply_override(c, "optimizer.eta=" + format_real(*f.eta));
    if (f.lnl) apply_override(c, "noise.level=" + format_real(*f.lnl));
    if (!f.out.empty()) c.run_log_path = f.out;
    if (c.run_log_path.empty()) {
      throw InvalidArgument(path + ": no output.run_log_path and no --out given");
    }
    runs.push_back(std::move(c));
  }

  // Whole runs in parallel; each run owns its model and its output file.
  std::atomic<std::size_t> next{0};
  std::vector<int> codes(runs.size(), kOk);
  std::mutex log_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < runs.size(); i = next++) {
      const auto& c = runs[i];
      int code = kOk;
      std::string message;
      try {
        write_run_log(c.run_log_path, execute_run(c));
      } catch (const NumericError& e) {
        code = kNumeric;
        message = e.what();
      } catch (const UndefinedMetric& e) {
        code = kNumeric;
        message = e.what();
      } catch (const std::exception& e) {
        code = kUsage;
        message = e.what();
      }
      codes[i] = code;
      std::lock_guard lock(log_mutex);
      if (code == kOk) {
        out << c.effective_run_id() << ": wrote " << c.run_log_path.string() << "\n";
      } else {
        err << c.effective_run_id() << ": " << message << "\n";
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(f.jobs, 1, std::max<std::size_t>(runs.size(), 1));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return codes.empty() ? kOk : *std::max_element(codes.begin(), codes.end());
}

// --- ntk bounds ------------------------------------------------------------

struct BoundsFlags {
  std::string idx_images, idx_labels;
  std::size_t n = 1000;
  std::size_t d = 16;
  std::size_t max_n = 2000;
  BoundParams params;
  std::string out;
};

std::vector<std::size_t> default_k_tilde_grid() {
  std::vector<std::size_t> g;
  for (std::size_t k = 0; k <= 20000; k += 2000) g.push_back(k);
  return g;
}

int cmd_ntk_bounds(BoundsFlags f, std::ostream& out, std::ostream& err) {
  if (f.params.k_tilde_grid.empty()) f.params.k_tilde_grid = default_k_tilde_grid();
  if (f.params.lnl_grid.empty()) f.params.lnl_grid = {0.0, 0.25, 0.5, 0.75, 1.0};
  f.params.validate();
  if (f.idx_images.empty() != f.idx_labels.empty()) {
    throw InvalidArgument("--idx-images and --idx-labels go together");
  }
  if (f.n > f.max_n) {
    throw InvalidArgument("n = " + std::to_string(f.n) + " exceeds --max-n " + std::to_string(f.max_n));
  }
  LabeledDataset ds;
  if (!f.idx_images.empty()) {
    ds = load_idx(f.idx_images, f.idx_labels, IdxOptions{f.n, true});
  } else {
    ds = synth_sphere_dataset(f.n, f.d, derive_seed(f.params.seed, "bounds/data"));
  }
  err << "ntk bounds: " << ds.size() << " samples, d = " << ds.dim() << "\n";
  const auto spectrum = eigendecompose(gram_infinity(ds.inputs));
  const auto points = bound_curves(spectrum, ds, f.params);

  Sink sink(f.out, out);
  auto& s = sink.get();
  s << "lnl,k_tilde,mu_half,sigma,lower,upper,base\n";
  for (const auto& p : points) {
    s << format_real(p.lnl) << ',' << p.k_tilde << ',' << format_real(p.mu_half) << ','
      << format_real(p.sigma) << ',' << format_real(p.lower) << ',' << format_real(p.upper) << ','
      << format_real(p.base) << '\n';
  }
  return kOk;
}

// --- ntk validate ----------------------------------------------------------

struct ValidateFlags {
  ValidationParams base;
  std::vector<double> lnl{0.0};
  std::vector<std::uint64_t> seeds{0};
  bool m_sweep = false;
  std::size_t sweep_factor = 2;
  double tolerance = 0.10;
  std::string out;
};

int cmd_ntk_validate(const ValidateFlags& f, std::ostream& out, std::ostream& err) {
  if (f.base.k_tilde_grid.empty()) throw InvalidArgument("--k-tilde: empty grid");
  std::vector<std::size_t> widths{f.base.m};
  if (f.m_sweep) {
    if (f.sweep_factor < 2) throw InvalidArgument("--sweep-factor must be at least 2");
    widths.push_back(f.base.m * f.sweep_factor);
  }

  Sink sink(f.out, out);
  auto& s = sink.get();
  s << "m,lnl,seed,eta,k_tilde,predicted,actual,relative_error\n";
  // (lnl, k~) -> width -> summed relative error over seeds
  std::map<std::pair<double, std::size_t>, std::map<std::size_t, double>> errors;
  double worst = 0.0;
  for (auto m : widths) {
    for (double lnl : f.lnl) {
      for (auto seed : f.seeds) {
        auto p = f.base;
        p.m = m;
        p.lnl = lnl;
        p.seed = seed;
        const auto report = validate_against_gd(p);
        for (const auto& row : report.rows) {
          s << m << ',' << format_real(lnl) << ',' << seed << ',' << format_real(report.eta) << ','
            << row.k_tilde << ',' << format_real(row.predicted) << ',' << format_real(row.actual)
            << ',' << format_real(row.relative_error) << '\n';
          errors[{lnl, row.k_tilde}][m] += row.relative_error;
          if (m == f.base.m) worst = std::max(worst, row.relative_error);
        }
      }
    }
  }

  const bool ok = worst <= f.tolerance;
  err << "max relative error at m = " << f.base.m << ": " << worst << " ("
      << (ok ? "PASS" : "FAIL") << " at " << f.tolerance << ")\n";
  if (f.m_sweep) {
    std::size_t shrunk = 0;
    for (const auto& [cell, by_m] : errors) {
      const double a = by_m.at(widths[0]) / double(f.seeds.size());
      const double b = by_m.at(widths[1]) / double(f.seeds.size());
      shrunk += b < a;
      err << "  lnl " << cell.first << ", k~ " << cell.second << ": " << a << " -> " << b
          << (b < a ? "  shrinks" : "  does not shrink") << "\n";
    }
    err << "error shrinks from m = " << widths[0] << " to " << widths[1] << " on " << shrunk
        << " of " << errors.size() << " cells\n";
  }
  return ok ? kOk : kNumeric;
}

// --- select ----------------------------------------------------------------

struct SelectFlags {
  std::vector<std::string> patterns;
  std::vector<double> percentile;
  bool blind = false;
  std::string out;
};

std::vector<std::string> expand_globs(const std::vector<std::string>& patterns) {
  std::vector<std::string> files;
  for (const auto& pattern : patterns) {
    glob_t g{};
    if (::glob(pattern.c_str(), 0, nullptr, &g) == 0) {
      for (std::size_t i = 0; i < g.gl_pathc; ++i) files.emplace_back(g.gl_pathv[i]);
    }
    ::globfree(&g);
  }
  std::sort(files.begin(), files.end());
  files.erase(std::unique(files.begin(), files.end()), files.end());
  return files;
}

int cmd_select(const SelectFlags& f, std::ostream& out, std::ostream& err) {
  const auto files = expand_globs(f.patterns);
  if (files.empty()) throw InvalidArgument("select: no run logs match " + join(f.patterns));
  std::vector<CheckpointRecord> records;
  for (const auto& file : files) {
    auto part = read_run_log(std::filesystem::path(file));
    records.insert(records.end(), std::make_move_iterator(part.begin()),
                   std::make_move_iterator(part.end()));
  }
  if (records.empty()) throw InvalidArgument("select: the matched run logs hold no records");
  err << "select: " << records.size() << " records from " << files.size() << " run log(s)\n";

  SelectionOptions opts;
  opts.blind = f.blind;
  if (!f.percentile.empty()) {
    if (f.percentile.size() != 2) throw InvalidArgument("--percentile takes ZETA,ACC");
    opts.percentiles = std::array<double, 2>{f.percentile[0], f.percentile[1]};
  }
  Sink sink(f.out, out);
  sink.get() << to_json(select_checkpoints(records, opts));
  return kOk;
}

// --- gram check ------------------------------------------------------------

struct GramFlags {
  std::size_t samples = 20;
  std::size_t mc = 1000000;
  std::size_t d = 16;
  std::uint64_t seed = 0;
};

Vector random_unit_vector(std::size_t d, Engine& eng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vector v(static_cast<Eigen::Index>(d));
  do {
    for (auto& x : v) x = gauss(eng);
  } while (v.norm() == 0.0);
  return v.normalized();
}

int cmd_gram_check(const GramFlags& f, std::ostream& out, std::ostream& /*err*/) {
  if (f.mc < 10000) throw InvalidArgument("--mc must be at least 10000");
  if (f.d < 2) throw InvalidArgument("--d must be at least 2");
  auto eng = make_engine(f.seed, "gram-check/pairs");
  out << "pair,closed_form,estimate,std_error,gap,tolerance,result\n";
  bool all = true;
  for (std::size_t i = 0; i < f.samples; ++i) {
    const Vector xi = random_unit_vector(f.d, eng);
    const Vector xj = random_unit_vector(f.d, eng);
    const auto est = gram_entry_monte_carlo(xi, xj, f.mc, derive_seed(f.seed, i));
    const double tol = 3.0 * est.std_error + 1e-3;
    const bool pass = est.gap() <= tol;
    all = all && pass;
    out << i << ',' << format_real(est.closed_form) << ',' << format_real(est.estimate) << ','
        << format_real(est.std_error) << ',' << format_real(est.gap()) << ',' << format_real(tol)
        << ',' << (pass ? "pass" : "FAIL") << '\n';
  }
  out << (all ? "all pairs pass" : "some pairs FAIL") << '\n';
  return all ? kOk : kNumeric;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Noisy-label memorization lab: training, susceptibility, NTK checks, selection",
               "memlab"};
  app.require_subcommand(1);

  TrainFlags train;
  auto* t = app.add_subcommand("train", "Train one or more runs and write their run logs");
  t->add_option("-c,--config", train.configs, "Run config JSON (repeatable)")->required();
  t->add_option("--set", train.overrides, "Override a config field, e.g. optimizer.eta=0.05");
  t->add_option("--seed", train.seed, "Override seed");
  t->add_option("--epochs", train.epochs, "Override optimizer.epochs");
  t->add_option("--eta", train.eta, "Override optimizer.eta");
  t->add_option("--lnl", train.lnl, "Override noise.level");
  t->add_option("-o,--out", train.out, "Run-log path (single config only)");
  t->add_option("-j,--jobs", train.jobs, "Runs to execute concurrently")->check(CLI::PositiveNumber);

  auto* ntk = app.add_subcommand("ntk", "Infinite-width kernel analysis");
  ntk->require_subcommand(1);

  BoundsFlags bounds;
  auto* b = ntk->add_subcommand("bounds", "Lower/upper bound curves over (LNL, k~)");
  b->add_option("--idx-images", bounds.idx_images, "IDX image file (else synthetic sphere)");
  b->add_option("--idx-labels", bounds.idx_labels, "IDX label file");
  b->add_option("-n,--n", bounds.n, "Samples")->capture_default_str();
  b->add_option("-d,--d", bounds.d, "Synthetic input dimension")->capture_default_str();
  b->add_option("--max-n", bounds.max_n, "Refuse larger n")->capture_default_str();
  b->add_option("--eta", bounds.params.eta, "Step size")->capture_default_str();
  b->add_option("--k", bounds.params.k, "Steps on the training labels")->capture_default_str();
  b->add_option("--delta", bounds.params.delta, "Chebyshev confidence")->capture_default_str();
  b->add_option("--lnl", bounds.params.lnl_grid, "LNL grid")->delimiter(',');
  b->add_option("--k-tilde", bounds.params.k_tilde_grid, "k~ grid")->delimiter(',');
  b->add_option("--draws", bounds.params.draws, "Monte Carlo draws")->capture_default_str();
  b->add_option("--seed", bounds.params.seed, "Seed")->capture_default_str();
  b->add_option("-o,--out", bounds.out, "CSV path (default stdout)");

  ValidateFlags val;
  auto* v = ntk->add_subcommand("validate", "Closed form vs real two-phase gradient descent");
  v->add_option("-n,--n", val.base.n)->capture_default_str();
  v->add_option("-d,--d", val.base.d)->capture_default_str();
  v->add_option("-m,--m", val.base.m, "Hidden width")->capture_default_str();
  v->add_option("--kappa", val.base.kappa)->capture_default_str();
  v->add_option("--eta", val.base.eta, "Step size (0 = default)")->capture_default_str();
  v->add_option("--k", val.base.k)->capture_default_str();
  v->add_option("--k-tilde", val.base.k_tilde_grid)->delimiter(',');
  v->add_option("--lnl", val.lnl, "Label noise levels")->delimiter(',');
  v->add_option("--seeds", val.seeds, "Seeds")->delimiter(',');
  v->add_flag("--m-sweep", val.m_sweep, "Also run at m * sweep-factor and compare errors");
  v->add_option("--sweep-factor", val.sweep_factor)->capture_default_str();
  v->add_option("--tolerance", val.tolerance, "Relative error tolerance")->capture_default_str();
  v->add_option("-o,--out", val.out, "CSV path (default stdout)");

  SelectFlags sel;
  auto* s = app.add_subcommand("select", "Partition checkpoints from run logs into regions");
  s->add_option("logs", sel.patterns, "Run-log paths or glob patterns")->required();
  s->add_option("--percentile", sel.percentile, "ZETA,ACC percentile thresholds")->delimiter(',');
  s->add_flag("--blind", sel.blind, "Do not read or report test accuracy");
  s->add_option("-o,--out", sel.out, "Report path (default stdout)");

  GramFlags gram;
  auto* g = app.add_subcommand("gram", "Kernel checks");
  g->require_subcommand(1);
  auto* gc = g->add_subcommand("check", "Closed-form kernel vs Monte Carlo");
  gc->add_option("--samples", gram.samples, "Random unit-vector pairs")->capture_default_str();
  gc->add_option("--mc", gram.mc, "Gaussian draws per pair")->capture_default_str();
  gc->add_option("-d,--d", gram.d)->capture_default_str();
  gc->add_option("--seed", gram.seed)->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kUsage;
  }

  try {
    if (t->parsed()) return cmd_train(train, out, err);
    if (b->parsed()) return cmd_ntk_bounds(bounds, out, err);
    if (v->parsed()) return cmd_ntk_validate(val, out, err);
    if (s->parsed()) return cmd_select(sel, out, err);
    if (gc->parsed()) return cmd_gram_check(gram, out, err);
  } catch (const NumericError& e) {
    err << "error: " << e.what() << "\n";
    return kNumeric;
  } catch (const UndefinedMetric& e) {
    err << "error: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}

}  // namespace memlab::cli
