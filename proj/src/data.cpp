#include "memlab/data.hpp"

#include "memlab/errors.hpp"
#include "memlab/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <string>

namespace memlab {

namespace {

std::vector<std::size_t> shuffled_indices(std::size_t n, Engine& eng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  // Fisher-Yates with an explicit distribution so the permutation does not
  // depend on the std::shuffle implementation.
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(idx[i - 1], idx[pick(eng)]);
  }
  return idx;
}

int random_class(int num_classes, bool binary, Engine& eng) {
  if (binary) {
    std::bernoulli_distribution coin(0.5);
    return coin(eng) ? 1 : -1;
  }
  std::uniform_int_distribution<int> pick(0, num_classes - 1);
  return pick(eng);
}

std::uint32_t read_be32(std::istream& in, const std::filesystem::path& path) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) {
    throw FormatError(path.string() + ": truncated header");
  }
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) |
         (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>((v >> 24) & 0xff),
                              static_cast<char>((v >> 16) & 0xff),
                              static_cast<char>((v >> 8) & 0xff),
                              static_cast<char>(v & 0xff)};
  out.write(b.data(), 4);
}

std::vector<std::uint8_t> read_payload(std::istream& in, std::size_t expected,
                                       const std::filesystem::path& path) {
  std::vector<std::uint8_t> buf(expected);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(expected));
  const auto got = static_cast<std::size_t>(in.gcount());
  if (got != expected) {
    throw FormatError(path.string() + ": truncated payload, expected " +
                      std::to_string(expected) + " bytes, got " + std::to_string(got));
  }
  return buf;
}

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

}  // namespace

std::vector<bool> LabeledDataset::mislabeled_mask() const {
  std::vector<bool> mask(assigned_labels.size());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = assigned_labels[i] != true_labels[i];
  return mask;
}

std::vector<bool> LabeledDataset::clean_mask() const {
  auto mask = mislabeled_mask();
  mask.flip();
  return mask;
}

Vector LabeledDataset::label_vector() const {
  if (!binary) throw StateError("label_vector requires a binary dataset");
  Vector y(static_cast<Eigen::Index>(assigned_labels.size()));
  for (std::size_t i = 0; i < assigned_labels.size(); ++i) y(Eigen::Index(i)) = assigned_labels[i];
  return y;
}

Vector LabeledDataset::true_label_vector() const {
  if (!binary) throw StateError("true_label_vector requires a binary dataset");
  Vector y(static_cast<Eigen::Index>(true_labels.size()));
  for (std::size_t i = 0; i < true_labels.size(); ++i) y(Eigen::Index(i)) = true_labels[i];
  return y;
}

LabeledDataset LabeledDataset::subset(const std::vector<std::size_t>& rows) const {
  LabeledDataset out;
  out.num_classes = num_classes;
  out.binary = binary;
  out.inputs.resize(static_cast<Eigen::Index>(rows.size()), inputs.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.inputs.row(Eigen::Index(r)) = inputs.row(Eigen::Index(rows[r]));
    out.assigned_labels.push_back(assigned_labels[rows[r]]);
    out.true_labels.push_back(true_labels[rows[r]]);
    out.noisy_mask.push_back(noisy_mask[rows[r]]);
  }
  return out;
}

Vector ProbeBatch::label_vector() const {
  Vector y(static_cast<Eigen::Index>(random_labels.size()));
  for (std::size_t i = 0; i < random_labels.size(); ++i) y(Eigen::Index(i)) = random_labels[i];
  return y;
}

std::size_t noisy_count(double level, std::size_t n) {
  return static_cast<std::size_t>(std::llround(level * static_cast<double>(n)));
}

Vector sphere_separator(std::size_t d, std::uint64_t seed) {
  auto eng = make_engine(seed, "sphere/separator");
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vector w(static_cast<Eigen::Index>(d));
  for (auto& v : w) v = gauss(eng);
  return w.normalized();
}

LabeledDataset synth_sphere_dataset(std::size_t n, std::size_t d, std::uint64_t seed) {
  if (n == 0 || d == 0) throw InvalidArgument("synth_sphere_dataset: n and d must be positive");
  if (n < 2 || d < 2) throw InvalidArgument("synth_sphere_dataset: need n >= 2 and d >= 2");

  auto eng = make_engine(seed, "sphere/inputs");
  std::normal_distribution<double> gauss(0.0, 1.0);
  LabeledDataset ds;
  ds.binary = true;
  ds.num_classes = 2;
  ds.inputs.resize(Eigen::Index(n), Eigen::Index(d));
  for (Eigen::Index i = 0; i < ds.inputs.rows(); ++i) {
    double norm = 0.0;
    do {
      for (Eigen::Index j = 0; j < ds.inputs.cols(); ++j) ds.inputs(i, j) = gauss(eng);
      norm = ds.inputs.row(i).norm();
    } while (norm == 0.0);
    ds.inputs.row(i) /= norm;
  }
  const Vector w = sphere_separator(d, seed);
  const Vector score = ds.inputs * w;
  ds.true_labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) ds.true_labels[i] = score(Eigen::Index(i)) >= 0.0 ? 1 : -1;
  ds.assigned_labels = ds.true_labels;
  ds.noisy_mask.assign(n, false);
  return ds;
}

Matrix blob_means(std::size_t d, int c, std::uint64_t seed) {
  auto eng = make_engine(seed, "blobs/means");
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix means(c, Eigen::Index(d));
  for (auto& v : means.reshaped()) v = gauss(eng);
  return means;
}

LabeledDataset sample_blobs(const Matrix& means, std::size_t n, double spread,
                            std::uint64_t seed) {
  if (spread < 0.0) throw InvalidArgument("synth_blobs: spread must be >= 0");
  const auto c = static_cast<int>(means.rows());
  if (c < 2) throw InvalidArgument("synth_blobs: need at least 2 classes");
  if (n < static_cast<std::size_t>(c)) throw InvalidArgument("synth_blobs: need n >= c");

  auto eng = make_engine(seed, "blobs/samples");
  std::normal_distribution<double> gauss(0.0, 1.0);
  LabeledDataset ds;
  ds.num_classes = c;
  ds.inputs.resize(Eigen::Index(n), means.cols());
  ds.true_labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % static_cast<std::size_t>(c));
    ds.true_labels[i] = label;
    for (Eigen::Index j = 0; j < means.cols(); ++j) {
      ds.inputs(Eigen::Index(i), j) = means(label, j) + spread * gauss(eng);
    }
  }
  ds.assigned_labels = ds.true_labels;
  ds.noisy_mask.assign(n, false);
  return ds;
}

LabeledDataset synth_blobs(std::size_t n, std::size_t d, int c, double spread,
                           std::uint64_t seed) {
  if (spread < 0.0) throw InvalidArgument("synth_blobs: spread must be >= 0");
  if (c < 2) throw InvalidArgument("synth_blobs: need at least 2 classes");
  if (d == 0) throw InvalidArgument("synth_blobs: d must be positive");
  return sample_blobs(blob_means(d, c, seed), n, spread, seed);
}

LabeledDataset load_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path, const IdxOptions& options) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw FormatError(images_path.string() + ": cannot open");
  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw FormatError(labels_path.string() + ": cannot open");

  const auto img_magic = read_be32(img, images_path);
  if (img_magic != kImageMagic) {
    throw FormatError(images_path.string() + ": bad IDX image magic " + std::to_string(img_magic));
  }
  const auto lab_magic = read_be32(lab, labels_path);
  if (lab_magic != kLabelMagic) {
    throw FormatError(labels_path.string() + ": bad IDX label magic " + std::to_string(lab_magic));
  }
  std::size_t count = read_be32(img, images_path);
  const std::size_t rows = read_be32(img, images_path);
  const std::size_t cols = read_be32(img, images_path);
  const std::size_t label_count = read_be32(lab, labels_path);
  if (label_count != count) {
    throw FormatError(labels_path.string() + ": label count " + std::to_string(label_count) +
                      " does not match image count " + std::to_string(count));
  }
  if (options.limit > 0) count = std::min(count, options.limit);

  const std::size_t pixels_per_image = rows * cols;
  const auto pixels = read_payload(img, count * pixels_per_image, images_path);
  const auto labels = read_payload(lab, count, labels_path);

  int max_label = 0;
  for (auto l : labels) max_label = std::max(max_label, int(l));
  const int num_classes = std::max(2, max_label + 1);

  LabeledDataset ds;
  ds.num_classes = options.unit_sphere ? 2 : num_classes;
  ds.binary = options.unit_sphere;
  ds.inputs.resize(Eigen::Index(count), Eigen::Index(pixels_per_image));
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t j = 0; j < pixels_per_image; ++j) {
      ds.inputs(Eigen::Index(i), Eigen::Index(j)) = pixels[i * pixels_per_image + j] / 255.0;
    }
    int label = labels[i];
    if (options.unit_sphere) {
      const double norm = ds.inputs.row(Eigen::Index(i)).norm();
      if (norm == 0.0) continue;
      ds.inputs.row(Eigen::Index(i)) /= norm;
      label = label < num_classes / 2 ? -1 : 1;
    }
    keep.push_back(i);
    ds.true_labels.push_back(label);
  }
  if (keep.size() != count) {
    std::cerr << "warning: dropped " << (count - keep.size()) << " all-zero rows from "
              << images_path.string() << "\n";
    Matrix kept(Eigen::Index(keep.size()), ds.inputs.cols());
    for (std::size_t r = 0; r < keep.size(); ++r) kept.row(Eigen::Index(r)) = ds.inputs.row(Eigen::Index(keep[r]));
    ds.inputs = std::move(kept);
  }
  ds.assigned_labels = ds.true_labels;
  ds.noisy_mask.assign(ds.true_labels.size(), false);
  return ds;
}

void write_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
               const std::vector<std::uint8_t>& pixels, std::size_t rows, std::size_t cols,
               const std::vector<std::uint8_t>& labels) {
  if (pixels.size() != labels.size() * rows * cols) {
    throw ShapeError("write_idx: pixel buffer does not match count*rows*cols");
  }
  std::ofstream img(images_path, std::ios::binary);
  std::ofstream lab(labels_path, std::ios::binary);
  if (!img || !lab) throw FormatError("write_idx: cannot open output files");
  write_be32(img, kImageMagic);
  write_be32(img, static_cast<std::uint32_t>(labels.size()));
  write_be32(img, static_cast<std::uint32_t>(rows));
  write_be32(img, static_cast<std::uint32_t>(cols));
  img.write(reinterpret_cast<const char*>(pixels.data()), std::streamsize(pixels.size()));
  write_be32(lab, kLabelMagic);
  write_be32(lab, static_cast<std::uint32_t>(labels.size()));
  lab.write(reinterpret_cast<const char*>(labels.data()), std::streamsize(labels.size()));
}

LabeledDataset inject_noise(const LabeledDataset& ds, const NoiseSpec& spec) {
  if (!(spec.level >= 0.0 && spec.level <= 1.0)) {
    throw InvalidArgument("inject_noise: level must lie in [0, 1]");
  }
  if (std::any_of(ds.noisy_mask.begin(), ds.noisy_mask.end(), [](bool b) { return b; })) {
    throw StateError("inject_noise: dataset already carries injected noise");
  }
  LabeledDataset out = ds;
  const std::size_t n = ds.size();
  const std::size_t count = noisy_count(spec.level, n);
  if (count == 0) return out;

  auto pick_eng = make_engine(spec.seed, "noise/indices");
  auto label_eng = make_engine(spec.seed, "noise/labels");
  const auto order = shuffled_indices(n, pick_eng);
  for (std::size_t r = 0; r < count; ++r) {
    const std::size_t i = order[r];
    out.noisy_mask[i] = true;
    if (spec.kind == NoiseKind::symmetric) {
      out.assigned_labels[i] = random_class(ds.num_classes, ds.binary, label_eng);
    } else if (ds.binary) {
      out.assigned_labels[i] = -ds.true_labels[i];
    } else {
      out.assigned_labels[i] = (ds.true_labels[i] + 1) % ds.num_classes;
    }
  }
  return out;
}

ProbeBatch make_probe_batch(const LabeledDataset& ds, std::size_t b, std::uint64_t seed) {
  if (b == 0) throw InvalidArgument("make_probe_batch: batch size must be positive");
  if (b > ds.size()) throw InvalidArgument("make_probe_batch: batch larger than dataset");

  auto pick_eng = make_engine(seed, "probe/indices");
  auto label_eng = make_engine(seed, "probe/labels");
  const auto order = shuffled_indices(ds.size(), pick_eng);
  ProbeBatch probe;
  probe.seed = seed;
  probe.num_classes = ds.num_classes;
  probe.binary = ds.binary;
  probe.inputs.resize(Eigen::Index(b), ds.inputs.cols());
  probe.random_labels.resize(b);
  for (std::size_t r = 0; r < b; ++r) {
    probe.inputs.row(Eigen::Index(r)) = ds.inputs.row(Eigen::Index(order[r]));
    probe.random_labels[r] = random_class(ds.num_classes, ds.binary, label_eng);
  }
  return probe;
}

Vector random_sign_vector(std::size_t n, std::uint64_t seed) {
  auto eng = make_engine(seed, "signs");
  std::bernoulli_distribution coin(0.5);
  Vector v(static_cast<Eigen::Index>(n));
  for (auto& x : v) x = coin(eng) ? 1.0 : -1.0;
  return v;
}

Vector noisy_binary_label_vector(const LabeledDataset& ds, double lnl, std::uint64_t seed) {
  if (!(lnl >= 0.0 && lnl <= 1.0)) {
    throw InvalidArgument("noisy_binary_label_vector: lnl must lie in [0, 1]");
  }
  if (!ds.binary) throw StateError("noisy_binary_label_vector requires a binary dataset");
  const std::size_t n = ds.size();
  Vector y = ds.true_label_vector();
  auto pick_eng = make_engine(seed, "binary-noise/indices");
  const auto order = shuffled_indices(n, pick_eng);
  const Vector signs = random_sign_vector(n, derive_seed(seed, "binary-noise/signs"));
  const std::size_t count = noisy_count(lnl, n);
  for (std::size_t r = 0; r < count; ++r) {
    const auto i = Eigen::Index(order[r]);
    y(i) = signs(i);
  }
  return y;
}

}  // namespace memlab
