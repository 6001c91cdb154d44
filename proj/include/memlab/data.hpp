#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace memlab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// A labelled design matrix together with its corruption bookkeeping.
///
/// Labels are class indices in [0, num_classes). In binary (NTK) mode the
/// labels are stored as -1/+1 and num_classes is 2.
struct LabeledDataset {
  Matrix inputs;  // n x d, one sample per row
  std::vector<int> assigned_labels;
  std::vector<int> true_labels;
  std::vector<bool> noisy_mask;  // true where the label was replaced
  int num_classes = 2;
  bool binary = false;

  std::size_t size() const { return static_cast<std::size_t>(inputs.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(inputs.cols()); }

  /// Samples whose assigned label differs from the ground truth. This is the
  /// subset on which memorization is measured.
  std::vector<bool> mislabeled_mask() const;
  std::vector<bool> clean_mask() const;

  /// Assigned labels as a real vector (binary mode only).
  Vector label_vector() const;
  Vector true_label_vector() const;

  LabeledDataset subset(const std::vector<std::size_t>& rows) const;
};

enum class NoiseKind { symmetric, asymmetric };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::symmetric;
  double level = 0.0;
  std::uint64_t seed = 0;
};

/// Fixed randomly-labelled batch used to measure susceptibility. Labels are
/// drawn once from the seed and never touched again.
struct ProbeBatch {
  Matrix inputs;
  std::vector<int> random_labels;
  int num_classes = 2;
  bool binary = false;
  std::uint64_t seed = 0;

  std::size_t size() const { return static_cast<std::size_t>(inputs.rows()); }
  Vector label_vector() const;
};

inline constexpr std::size_t kDefaultProbeSize = 128;

// Generators. All are pure functions of their arguments.

/// Unit-sphere inputs labelled by a random linear separator (binary mode).
LabeledDataset synth_sphere_dataset(std::size_t n, std::size_t d, std::uint64_t seed);

/// The separator used by synth_sphere_dataset for the given (d, seed).
Vector sphere_separator(std::size_t d, std::uint64_t seed);

/// Gaussian blobs around c random class means; class counts are stratified
/// (sample i belongs to class i mod c).
LabeledDataset synth_blobs(std::size_t n, std::size_t d, int c, double spread,
                           std::uint64_t seed);

/// Class means used by synth_blobs for (d, c, seed). Lets a test split reuse
/// the training distribution.
Matrix blob_means(std::size_t d, int c, std::uint64_t seed);

/// Draws n fresh samples around the given means.
LabeledDataset sample_blobs(const Matrix& means, std::size_t n, double spread,
                            std::uint64_t seed);

struct IdxOptions {
  std::size_t limit = 0;    // 0 = all records
  bool unit_sphere = false; // NTK mode: L2-normalize rows, binary labels
};

/// Reads an IDX image/label pair (MNIST family). Pixels are scaled to [0,1].
/// In unit-sphere mode all-zero rows are dropped and labels are mapped to
/// -1 (digits below num_classes/2) or +1.
LabeledDataset load_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path,
                        const IdxOptions& options = {});

/// Writes an IDX pair. Pixel values must be bytes (0..255) in `pixels`.
void write_idx(const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path,
               const std::vector<std::uint8_t>& pixels, std::size_t rows,
               std::size_t cols, const std::vector<std::uint8_t>& labels);

/// Relabels exactly round(level * n) samples chosen without replacement.
/// Throws StateError if the dataset already carries noise.
LabeledDataset inject_noise(const LabeledDataset& ds, const NoiseSpec& spec);

ProbeBatch make_probe_batch(const LabeledDataset& ds, std::size_t b, std::uint64_t seed);

/// NTK-mode label vector at the given noise level: round(lnl * n) entries
/// replaced by uniform signs, the rest equal to the true labels. For a fixed
/// seed the corrupted set at a lower level is a prefix of the one at a higher
/// level, so sweeps over lnl share randomness.
Vector noisy_binary_label_vector(const LabeledDataset& ds, double lnl, std::uint64_t seed);

/// Uniform random +-1 vector.
Vector random_sign_vector(std::size_t n, std::uint64_t seed);

std::size_t noisy_count(double level, std::size_t n);

}  // namespace memlab
