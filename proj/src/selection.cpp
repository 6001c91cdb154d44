#include "memlab/selection.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <numeric>
#include <tuple>

namespace memlab {

double pearson(std::span<const double> x, std::span<const double> y) {
  using Map = Eigen::Map<const Eigen::VectorXd>;
  if (x.size() != y.size()) {
    throw ShapeError("pearson: lengths " + std::to_string(x.size()) + " and " +
                     std::to_string(y.size()) + " differ");
  }
  return pearson(Map(x.data(), Eigen::Index(x.size())), Map(y.data(), Eigen::Index(y.size())));
}

double kendall_tau(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw ShapeError("kendall_tau: lengths " + std::to_string(x.size()) + " and " +
                     std::to_string(y.size()) + " differ");
  }
  const std::size_t n = x.size();
  if (n < 2) throw InvalidArgument("kendall_tau: need at least 2 points");
  // n0 - n1 and n0 - n2 are the pair counts not tied in x and in y.
  long long concordant = 0, discordant = 0, tied_x = 0, tied_y = 0;
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      const double dx = x[i] - x[j];
      const double dy = y[i] - y[j];
      if (dx == 0.0) ++tied_x;
      if (dy == 0.0) ++tied_y;
      if (dx == 0.0 || dy == 0.0) continue;
      ((dx > 0.0) == (dy > 0.0) ? concordant : discordant)++;
    }
  }
  const long long pairs = static_cast<long long>(n * (n - 1) / 2);
  const double untied_x = double(pairs - tied_x);
  const double untied_y = double(pairs - tied_y);
  if (untied_x == 0.0 || untied_y == 0.0) throw UndefinedMetric("kendall_tau: all values tied");
  return double(concordant - discordant) / std::sqrt(untied_x * untied_y);
}

// --- thresholds ------------------------------------------------------------

namespace {

void require_nonempty(std::span<const CheckpointRecord> records, const char* who) {
  if (records.empty()) throw InvalidArgument(std::string(who) + ": empty record set");
}

double zeta_of(const CheckpointRecord& r) {
  if (!r.zeta) {
    throw InvalidArgument("record " + r.run_id + "@" + std::to_string(r.epoch) +
                          " has no zeta (probe disabled)");
  }
  return *r.zeta;
}

template <typename Field>
std::vector<double> column(std::span<const CheckpointRecord> records, Field field) {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(field(r));
  return out;
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

}  // namespace

Thresholds mean_thresholds(std::span<const CheckpointRecord> records) {
  require_nonempty(records, "mean_thresholds");
  return {mean_of(column(records, [](const auto& r) { return zeta_of(r); })),
          mean_of(column(records, [](const auto& r) { return r.train_acc; }))};
}

double percentile(std::vector<double> values, double pct) {
  if (values.empty()) throw InvalidArgument("percentile: empty input");
  if (!(pct >= 0.0 && pct <= 100.0)) {
    throw InvalidArgument("percentile: " + std::to_string(pct) + " outside [0, 100]");
  }
  std::sort(values.begin(), values.end());
  const double pos = pct / 100.0 * double(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - double(lo)) * (values[hi] - values[lo]);
}

Thresholds percentile_thresholds(std::span<const CheckpointRecord> records, double zeta_pct,
                                 double acc_pct) {
  require_nonempty(records, "percentile_thresholds");
  return {percentile(column(records, [](const auto& r) { return zeta_of(r); }), zeta_pct),
          percentile(column(records, [](const auto& r) { return r.train_acc; }), acc_pct)};
}

RegionPartition partition(std::span<const CheckpointRecord> records,
                          const std::optional<Thresholds>& thresholds) {
  require_nonempty(records, "partition");
  RegionPartition out;
  out.thresholds = thresholds.value_or(mean_thresholds(records));
  out.assignment.reserve(records.size());
  for (const auto& r : records) out.assignment.push_back(region_of(zeta_of(r), r.train_acc, out.thresholds));
  return out;
}

std::array<RegionStats, 4> region_summary(const RegionPartition& partition,
                                          std::span<const CheckpointRecord> records) {
  if (partition.assignment.size() != records.size()) {
    throw ShapeError("region_summary: partition covers " +
                     std::to_string(partition.assignment.size()) + " records, got " +
                     std::to_string(records.size()));
  }
  std::array<std::vector<double>, 4> acc;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!records[i].test_acc) {
      throw InvalidArgument("region_summary: record " + records[i].run_id + "@" +
                            std::to_string(records[i].epoch) + " has no test_acc");
    }
    acc[std::size_t(partition.assignment[i] - 1)].push_back(*records[i].test_acc);
  }
  std::array<RegionStats, 4> out;
  for (std::size_t k = 0; k < 4; ++k) {
    out[k].region = int(k) + 1;
    out[k].count = acc[k].size();
    if (acc[k].empty()) continue;
    const double m = mean_of(acc[k]);
    double ss = 0.0;
    for (double v : acc[k]) ss += (v - m) * (v - m);
    out[k].mean_test_acc = m;
    out[k].std_test_acc = std::sqrt(ss / double(acc[k].size()));
  }
  return out;
}

// --- filtering -------------------------------------------------------------

std::vector<CheckpointRecord> filter_by_zeta(std::span<const CheckpointRecord> records,
                                             double threshold) {
  std::vector<CheckpointRecord> out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out),
               [threshold](const auto& r) { return zeta_of(r) <= threshold; });
  return out;
}

std::vector<CheckpointRecord> filter_by_zeta(std::span<const CheckpointRecord> records,
                                             MedianTag) {
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ra = records[a];
    const auto& rb = records[b];
    const double za = zeta_of(ra), zb = zeta_of(rb);
    return std::tie(za, ra.run_id, ra.epoch) < std::tie(zb, rb.run_id, rb.epoch);
  });
  order.resize((records.size() + 1) / 2);
  std::sort(order.begin(), order.end());
  std::vector<CheckpointRecord> out;
  out.reserve(order.size());
  for (auto i : order) out.push_back(records[i]);
  return out;
}

// --- report ----------------------------------------------------------------

namespace {

CorrelationRow correlate(std::string metric, const std::vector<double>& x,
                         const std::vector<double>& test) {
  CorrelationRow row{std::move(metric), std::nullopt, std::nullopt};
  if (x.size() < 2) return row;
  try {
    row.pearson = pearson(x, test);
  } catch (const UndefinedMetric&) {
  }
  try {
    row.kendall = kendall_tau(x, test);
  } catch (const UndefinedMetric&) {
  }
  return row;
}

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

SelectionReport select_checkpoints(std::span<const CheckpointRecord> records,
                                   const SelectionOptions& options) {
  require_nonempty(records, "select_checkpoints");
  SelectionReport report;
  report.records = records.size();
  report.blind = options.blind;
  report.threshold_rule = options.percentiles ? "percentile" : "mean";
  const auto part = partition(
      records, options.percentiles ? std::optional(percentile_thresholds(
                                         records, (*options.percentiles)[0], (*options.percentiles)[1]))
                                   : std::nullopt);
  report.thresholds = part.thresholds;

  if (options.blind) {
    for (std::size_t k = 0; k < 4; ++k) report.regions[k].region = int(k) + 1;
    for (int r : part.assignment) ++report.regions[std::size_t(r - 1)].count;
    return report;
  }

  report.regions = region_summary(part, records);
  const auto test = column(records, [](const auto& r) { return *r.test_acc; });
  report.correlations.push_back(
      correlate("train_acc", column(records, [](const auto& r) { return r.train_acc; }), test));
  report.correlations.push_back(
      correlate("zeta", column(records, [](const auto& r) { return zeta_of(r); }), test));
  return report;
}

std::string to_json(const SelectionReport& report) {
  nlohmann::ordered_json doc;
  doc["records"] = report.records;
  doc["blind"] = report.blind;
  doc["thresholds"] = {{"rule", report.threshold_rule},
                       {"zeta", report.thresholds.zeta},
                       {"train_acc", report.thresholds.acc}};
  auto regions = nlohmann::ordered_json::array();
  for (const auto& r : report.regions) {
    nlohmann::ordered_json entry{{"region", r.region}, {"count", r.count}};
    if (!report.blind) {
      entry["mean_test_acc"] = optional_json(r.mean_test_acc);
      entry["std_test_acc"] = optional_json(r.std_test_acc);
    }
    regions.push_back(std::move(entry));
  }
  doc["regions"] = std::move(regions);
  if (!report.blind) {
    auto table = nlohmann::ordered_json::array();
    for (const auto& c : report.correlations) {
      table.push_back({{"metric", c.metric},
                       {"against", "test_acc"},
                       {"pearson", optional_json(c.pearson)},
                       {"kendall_tau", optional_json(c.kendall)}});
    }
    doc["correlations"] = std::move(table);
  }
  return doc.dump(2) + "\n";
}

}  // namespace memlab
