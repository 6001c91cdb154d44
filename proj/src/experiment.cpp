#include "memlab/experiment.hpp"

#include "memlab/rng.hpp"
#include "memlab/susceptibility.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <type_traits>

namespace memlab {

using json = nlohmann::ordered_json;

// --- config parsing --------------------------------------------------------

namespace {

/// Walks one JSON object, consuming keys; whatever is left over is unknown.
class Section {
 public:
  Section(const json& j, std::string path) : path_(std::move(path)) {
    if (!j.is_object()) fail(path_.empty() ? "document" : path_, "expected an object");
    obj_ = j;
  }

  template <typename T>
  void take(const char* key, T& out) {
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
      if (!it->is_number_integer()) fail(field(key), "expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (!it->is_number_unsigned()) fail(field(key), "must be non-negative");
      }
    }
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      fail(field(key), "wrong type (" + std::string(it->type_name()) + ")");
    }
    obj_.erase(it);
  }

  template <typename T>
  void take(const char* key, std::optional<T>& out) {
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    if (!it->is_null()) {
      T v{};
      take(key, v);
      out = v;
      return;
    }
    out.reset();
    obj_.erase(it);
  }

  void take_path(const char* key, std::filesystem::path& out) {
    std::string s = out.string();
    take(key, s);
    out = s;
  }

  std::optional<Section> child(const char* key) {
    auto it = obj_.find(key);
    if (it == obj_.end()) return std::nullopt;
    Section s(*it, field(key));
    obj_.erase(it);
    return s;
  }

  void finish() const {
    if (!obj_.empty()) fail(field(obj_.begin().key().c_str()), "unknown key");
  }

  std::string field(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  [[noreturn]] static void fail(const std::string& where, const std::string& what) {
    throw InvalidArgument("config: " + where + ": " + what);
  }

 private:
  std::string path_;
  json obj_;
};

NoiseKind noise_kind_from(const std::string& s, const std::string& where) {
  if (s == "symmetric") return NoiseKind::symmetric;
  if (s == "asymmetric") return NoiseKind::asymmetric;
  Section::fail(where, "expected symmetric|asymmetric, got '" + s + "'");
}

Schedule schedule_from(const std::string& s, const std::string& where) {
  if (s == "none") return Schedule::none;
  if (s == "cosine" || s == "cosine_annealing") return Schedule::cosine_annealing;
  if (s == "exponential") return Schedule::exponential;
  Section::fail(where, "expected none|cosine_annealing|exponential, got '" + s + "'");
}

ProbeEtaSource eta_mode_from(const std::string& s, const std::string& where) {
  if (s == "same_as_training") return ProbeEtaSource::same_as_training;
  if (s == "fixed") return ProbeEtaSource::fixed;
  Section::fail(where, "expected same_as_training|fixed, got '" + s + "'");
}

const char* to_string(NoiseKind k) { return k == NoiseKind::symmetric ? "symmetric" : "asymmetric"; }

const char* to_string(Schedule s) {
  switch (s) {
    case Schedule::none: return "none";
    case Schedule::cosine_annealing: return "cosine_annealing";
    case Schedule::exponential: return "exponential";
  }
  return "none";
}

const char* to_string(ProbeEtaSource e) {
  return e == ProbeEtaSource::fixed ? "fixed" : "same_as_training";
}

RunConfig from_json(const json& doc) {
  RunConfig c;
  Section root(doc, "");
  root.take("seed", c.seed);
  root.take("run_id", c.run_id);

  if (auto s = root.child("dataset")) {
    s->take("kind", c.dataset.kind);
    s->take("n", c.dataset.n);
    s->take("d", c.dataset.d);
    s->take("classes", c.dataset.classes);
    s->take("spread", c.dataset.spread);
    s->take("test_n", c.dataset.test_n);
    s->take("limit", c.dataset.limit);
    if (auto p = s->child("paths")) {
      p->take_path("train_images", c.dataset.train_images);
      p->take_path("train_labels", c.dataset.train_labels);
      p->take_path("test_images", c.dataset.test_images);
      p->take_path("test_labels", c.dataset.test_labels);
      p->finish();
    }
    s->finish();
  }
  if (auto s = root.child("noise")) {
    std::string kind = to_string(c.noise.kind);
    s->take("kind", kind);
    c.noise.kind = noise_kind_from(kind, s->field("kind"));
    s->take("level", c.noise.level);
    s->take("seed", c.noise.seed);
    s->finish();
  }
  if (auto s = root.child("model")) {
    s->take("kind", c.model.kind);
    s->take("m", c.model.m);
    s->take("kappa", c.model.kappa);
    s->take("hidden_sizes", c.model.hidden_sizes);
    s->finish();
  }
  if (auto s = root.child("optimizer")) {
    auto& o = c.optimizer;
    s->take("eta", o.eta);
    std::string schedule = to_string(o.schedule);
    s->take("schedule", schedule);
    o.schedule = schedule_from(schedule, s->field("schedule"));
    s->take("t_max", o.t_max);
    s->take("gamma", o.gamma);
    s->take("momentum", o.momentum);
    s->take("batch_size", o.batch_size);
    s->take("epochs", o.epochs);
    s->finish();
  }
  if (auto s = root.child("probe")) {
    s->take("enabled", c.probe.enabled);
    s->take("batch_size", c.probe.batch_size);
    std::string mode = to_string(c.probe.eta_mode);
    s->take("eta_mode", mode);
    c.probe.eta_mode = eta_mode_from(mode, s->field("eta_mode"));
    s->take("eta", c.probe.eta);
    s->take("seed", c.probe.seed);
    s->finish();
  }
  if (auto s = root.child("output")) {
    s->take_path("run_log_path", c.run_log_path);
    s->finish();
  }
  root.finish();
  c.validate();
  return c;
}

json to_json_doc(const RunConfig& c) {
  json doc;
  doc["seed"] = c.seed;
  doc["run_id"] = c.run_id;
  doc["dataset"] = {{"kind", c.dataset.kind},
                    {"n", c.dataset.n},
                    {"d", c.dataset.d},
                    {"classes", c.dataset.classes},
                    {"spread", c.dataset.spread},
                    {"test_n", c.dataset.test_n},
                    {"limit", c.dataset.limit},
                    {"paths",
                     {{"train_images", c.dataset.train_images.string()},
                      {"train_labels", c.dataset.train_labels.string()},
                      {"test_images", c.dataset.test_images.string()},
                      {"test_labels", c.dataset.test_labels.string()}}}};
  doc["noise"] = {{"kind", to_string(c.noise.kind)}, {"level", c.noise.level}};
  doc["noise"]["seed"] = c.noise.seed ? json(*c.noise.seed) : json(nullptr);
  doc["model"] = {{"kind", c.model.kind},
                  {"m", c.model.m},
                  {"kappa", c.model.kappa},
                  {"hidden_sizes", c.model.hidden_sizes}};
  const auto& o = c.optimizer;
  doc["optimizer"] = {{"eta", o.eta},           {"schedule", to_string(o.schedule)},
                      {"t_max", o.t_max},       {"gamma", o.gamma},
                      {"momentum", o.momentum}, {"batch_size", o.batch_size},
                      {"epochs", o.epochs}};
  doc["probe"] = {{"enabled", c.probe.enabled},
                  {"batch_size", c.probe.batch_size},
                  {"eta_mode", to_string(c.probe.eta_mode)},
                  {"eta", c.probe.eta}};
  doc["probe"]["seed"] = c.probe.seed ? json(*c.probe.seed) : json(nullptr);
  doc["output"] = {{"run_log_path", c.run_log_path.string()}};
  return doc;
}

}  // namespace

std::string RunConfig::effective_run_id() const {
  return run_id.empty() ? "run-" + std::to_string(seed) : run_id;
}

void RunConfig::validate() const {
  auto fail = [](const std::string& where, const std::string& what) { Section::fail(where, what); };
  if (run_id.find_first_of(",\n\r\"") != std::string::npos) {
    fail("run_id", "must not contain commas, quotes or newlines");
  }
  const auto& ds = dataset;
  if (ds.kind != "synthetic_blobs" && ds.kind != "synthetic_sphere" && ds.kind != "idx") {
    fail("dataset.kind", "expected synthetic_blobs|synthetic_sphere|idx, got '" + ds.kind + "'");
  }
  if (ds.kind != "idx") {
    if (ds.n < 2) fail("dataset.n", "must be at least 2");
    if (ds.d == 0) fail("dataset.d", "must be positive");
  } else {
    if (ds.train_images.empty() || ds.train_labels.empty()) {
      fail("dataset.paths", "train_images and train_labels are required for idx");
    }
    if (ds.test_images.empty() != ds.test_labels.empty()) {
      fail("dataset.paths", "test_images and test_labels go together");
    }
  }
  if (ds.kind == "synthetic_blobs") {
    if (ds.classes < 2) fail("dataset.classes", "must be at least 2");
    if (ds.n < std::size_t(ds.classes)) fail("dataset.n", "must be at least dataset.classes");
    if (!(ds.spread >= 0.0)) fail("dataset.spread", "must be >= 0");
    if (ds.test_n != 0 && ds.test_n < std::size_t(ds.classes)) {
      fail("dataset.test_n", "must be 0 or at least dataset.classes");
    }
  }
  if (!(noise.level >= 0.0 && noise.level <= 1.0)) fail("noise.level", "must lie in [0, 1]");

  const bool binary = ds.kind == "synthetic_sphere" || (ds.kind == "idx" && model.kind == "two_layer_relu");
  if (model.kind == "two_layer_relu") {
    if (!binary) fail("model.kind", "two_layer_relu needs a binary dataset (synthetic_sphere or idx)");
    if (model.m == 0) fail("model.m", "must be positive");
    if (!(model.kappa > 0.0 && model.kappa <= 1.0)) fail("model.kappa", "must lie in (0, 1]");
  } else if (model.kind == "mlp") {
    if (binary) fail("model.kind", "mlp needs a multi-class dataset");
    for (auto h : model.hidden_sizes) {
      if (h == 0) fail("model.hidden_sizes", "widths must be positive");
    }
  } else {
    fail("model.kind", "expected mlp|two_layer_relu, got '" + model.kind + "'");
  }

  try {
    optimizer.validate();
  } catch (const InvalidArgument& e) {
    fail("optimizer", e.what());
  }
  if (probe.enabled) {
    if (probe.batch_size == 0) fail("probe.batch_size", "must be positive");
    if (probe.eta_mode == ProbeEtaSource::fixed && !(probe.eta >= 0.0)) {
      fail("probe.eta", "must be >= 0");
    }
  }
}

RunConfig parse_run_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw InvalidArgument(std::string("config: not valid JSON: ") + e.what());
  }
  return from_json(doc);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("config: cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_run_config(buf.str());
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
}

void apply_override(RunConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw InvalidArgument("override '" + assignment + "': expected key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;  // bare strings need no quotes
  }
  json doc = to_json_doc(config);
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? dot : dot - start);
    if (!node->is_object() || !node->contains(part)) {
      throw InvalidArgument("override '" + assignment + "': unknown key " + key);
    }
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  *node = value;
  config = from_json(doc);
}

std::string to_json(const RunConfig& config) { return to_json_doc(config).dump(2) + "\n"; }

// --- execution -------------------------------------------------------------

RunData build_run_data(const RunConfig& c) {
  const auto data_seed = derive_seed(c.seed, "data");
  const auto& ds = c.dataset;
  RunData out;
  if (ds.kind == "synthetic_blobs") {
    out.train = synth_blobs(ds.n, ds.d, ds.classes, ds.spread, data_seed);
    if (ds.test_n > 0) {
      out.test = sample_blobs(blob_means(ds.d, ds.classes, data_seed), ds.test_n, ds.spread,
                              derive_seed(data_seed, "test"));
    }
  } else if (ds.kind == "synthetic_sphere") {
    // One draw split in two, so both halves share the separator.
    const auto all = synth_sphere_dataset(ds.n + ds.test_n, ds.d, data_seed);
    std::vector<std::size_t> train_rows(ds.n), test_rows(ds.test_n);
    for (std::size_t i = 0; i < ds.n; ++i) train_rows[i] = i;
    for (std::size_t i = 0; i < ds.test_n; ++i) test_rows[i] = ds.n + i;
    out.train = all.subset(train_rows);
    if (ds.test_n > 0) out.test = all.subset(test_rows);
  } else {
    const IdxOptions opts{ds.limit, c.model.kind == "two_layer_relu"};
    out.train = load_idx(ds.train_images, ds.train_labels, opts);
    if (!ds.test_images.empty()) out.test = load_idx(ds.test_images, ds.test_labels, opts);
  }
  if (c.noise.level > 0.0) {
    out.train = inject_noise(
        out.train, NoiseSpec{c.noise.kind, c.noise.level,
                             c.noise.seed.value_or(derive_seed(c.seed, "noise"))});
  }
  return out;
}

namespace {

std::optional<double> subset_accuracy(std::span<const int> predicted, std::span<const int> labels,
                                      std::vector<bool> mask) {
  try {
    return accuracy(predicted, labels, std::move(mask));
  } catch (const UndefinedMetric&) {
    return std::nullopt;
  }
}

template <typename Model, typename Epoch>
std::vector<CheckpointRecord> run_loop(const RunConfig& c, const RunData& data, Model model,
                                       Epoch&& epoch) {
  auto state = make_train_state(std::move(model), derive_seed(c.seed, "train"), c.effective_run_id());
  std::optional<SusceptibilityTracker> tracker;
  if (c.probe.enabled) {
    tracker.emplace(make_probe_batch(data.train, c.probe.batch_size,
                                     c.probe.seed.value_or(derive_seed(c.seed, "probe"))),
                    c.probe.eta_mode, c.probe.eta);
  }
  for (std::size_t e = 0; e < c.optimizer.epochs; ++e) {
    epoch(state);
    auto& rec = state.records.back();
    if (!std::isfinite(rec.train_loss)) {
      throw NumericError("training diverged at epoch " + std::to_string(rec.epoch) +
                         " (loss " + format_real(rec.train_loss) + "); lower optimizer.eta");
    }
    if (data.test) rec.test_acc = accuracy(state.model, data.test->inputs, data.test->assigned_labels);
    if (tracker) {
      rec.zeta_increment = probe_step(state.model, *tracker, rec.lr);
      rec.zeta = tracker->zeta;
    }
  }
  return std::move(state.records);
}

}  // namespace

std::vector<CheckpointRecord> execute_run(const RunConfig& c) {
  c.validate();
  const RunData data = build_run_data(c);
  const auto init_seed = derive_seed(c.seed, "init");
  if (c.model.kind == "two_layer_relu") {
    const Vector y = data.train.label_vector();
    const auto clean = data.train.clean_mask();
    const auto noisy = data.train.mislabeled_mask();
    return run_loop(c, data, init_two_layer(data.train.dim(), c.model.m, c.model.kappa, init_seed),
                    [&](TrainState<TwoLayerReluNet>& s) {
                      gd_step(s, data.train.inputs, y, c.optimizer);
                      const auto pred = predict(s.model, data.train.inputs);
                      s.records.back().train_acc_clean =
                          subset_accuracy(pred, data.train.assigned_labels, clean);
                      s.records.back().train_acc_noisy =
                          subset_accuracy(pred, data.train.assigned_labels, noisy);
                    });
  }
  return run_loop(c, data,
                  init_mlp(data.train.dim(), c.model.hidden_sizes, data.train.num_classes, init_seed),
                  [&](TrainState<MlpClassifier>& s) { train_mlp_epoch(s, data.train, c.optimizer); });
}

// --- run-log CSV -----------------------------------------------------------

std::string format_real(double v) {
  char buf[32];
  const int len = std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf, std::size_t(len));
}

namespace {

std::string format_optional(const std::optional<double>& v) { return v ? format_real(*v) : ""; }

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string::npos ? comma : comma - start));
    if (comma == std::string::npos) return out;
    start = comma + 1;
  }
}

}  // namespace

void write_run_log(std::ostream& out, const std::vector<CheckpointRecord>& records) {
  out << kRunLogHeader << '\n';
  for (const auto& r : records) {
    out << r.run_id << ',' << r.epoch << ',' << format_real(r.lr) << ','
        << format_real(r.train_loss) << ',' << format_real(r.train_acc) << ','
        << format_optional(r.train_acc_clean) << ',' << format_optional(r.train_acc_noisy) << ','
        << format_optional(r.test_acc) << ',' << format_optional(r.zeta_increment) << ','
        << format_optional(r.zeta) << '\n';
  }
}

void write_run_log(const std::filesystem::path& path, const std::vector<CheckpointRecord>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(path.string() + ": cannot open for writing");
  write_run_log(out, records);
  if (!out) throw FormatError(path.string() + ": write failed");
}

std::vector<CheckpointRecord> read_run_log(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError(source + ": empty file, expected a header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kRunLogHeader) throw FormatError(source + ":1: unexpected header '" + line + "'");

  std::vector<CheckpointRecord> records;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto where = source + ":" + std::to_string(lineno);
    const auto f = split_fields(line);
    if (f.size() != 10) {
      throw FormatError(where + ": expected 10 fields, got " + std::to_string(f.size()));
    }
    auto real = [&](const std::string& s, const char* name) {
      double v = 0.0;
      const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (s.empty() || ec != std::errc() || end != s.data() + s.size()) {
        throw FormatError(where + ": field " + name + ": '" + s + "' is not a number");
      }
      return v;
    };
    auto optional_real = [&](const std::string& s, const char* name) -> std::optional<double> {
      if (s.empty()) return std::nullopt;
      return real(s, name);
    };
    CheckpointRecord r;
    r.run_id = f[0];
    std::size_t epoch = 0;
    const auto [end, ec] = std::from_chars(f[1].data(), f[1].data() + f[1].size(), epoch);
    if (f[1].empty() || ec != std::errc() || end != f[1].data() + f[1].size()) {
      throw FormatError(where + ": field epoch: '" + f[1] + "' is not a count");
    }
    r.epoch = epoch;
    r.lr = real(f[2], "lr");
    r.train_loss = real(f[3], "train_loss");
    r.train_acc = real(f[4], "train_acc");
    r.train_acc_clean = optional_real(f[5], "train_acc_clean");
    r.train_acc_noisy = optional_real(f[6], "train_acc_noisy");
    r.test_acc = optional_real(f[7], "test_acc");
    r.zeta_increment = optional_real(f[8], "zeta_increment");
    r.zeta = optional_real(f[9], "zeta");
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<CheckpointRecord> read_run_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.string() + ": cannot open");
  return read_run_log(in, path.string());
}

}  // namespace memlab
