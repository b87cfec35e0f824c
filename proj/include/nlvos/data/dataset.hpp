#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace nlvos::data {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// What training code may see: inputs, noisy labels and ids. True labels are
/// deliberately absent from this type.
struct TrainingView {
  MatrixXd features;        // input_dim x n
  std::vector<int> labels;  // noisy
  std::vector<int> ids;
  int num_classes = 0;

  std::size_t size() const { return labels.size(); }
  Eigen::Index input_dim() const { return features.rows(); }
};

/// Samples with noisy labels plus the hidden true labels, which are reachable
/// only through true_labels() for evaluation.
class LabeledDataset {
 public:
  LabeledDataset() = default;
  LabeledDataset(MatrixXd features, std::vector<int> true_labels, std::vector<int> noisy_labels,
                 std::vector<int> ids, int num_classes);

  const TrainingView& training() const { return view_; }
  std::span<const int> true_labels() const { return true_labels_; }
  std::span<const int> noisy_labels() const { return view_.labels; }
  const MatrixXd& features() const { return view_.features; }
  std::span<const int> ids() const { return view_.ids; }
  int num_classes() const { return view_.num_classes; }
  std::size_t size() const { return view_.size(); }

  /// Fraction of samples whose noisy label differs from the true label.
  double flip_fraction() const;
  /// Per-sample "label is correct" mask.
  std::vector<bool> clean_mask() const;

 private:
  TrainingView view_;
  std::vector<int> true_labels_;
};

enum class Generator { gaussian_blobs, two_moons_kd, ring_classes };

std::string to_string(Generator g);
std::optional<Generator> parse_generator(std::string_view name);

/// Desk-scale stand-in for an image benchmark.
struct SyntheticSpec {
  Generator generator = Generator::gaussian_blobs;
  int n_samples = 2000;
  int n_classes = 4;
  int input_dim = 8;
  double separation = 3.0;  // in units of the within-class noise scale
  std::uint64_t seed = 0;

  void validate() const;
};

/// Class centers used by a generator (input_dim x K).
MatrixXd class_centers(const SyntheticSpec& spec);

/// Clean dataset; `stream` selects an independent sample stream over the same
/// class geometry (0 = train, 1 = test, ...). Labels are i mod K, so class
/// counts are balanced to within one.
LabeledDataset generate(const SyntheticSpec& spec, std::uint64_t stream = 0);

enum class NoiseMode { symmetric, asymmetric };

std::string to_string(NoiseMode m);
std::optional<NoiseMode> parse_noise_mode(std::string_view name);

struct NoiseSpec {
  NoiseMode mode = NoiseMode::symmetric;
  double rate = 0.4;
  std::uint64_t seed = 0;
};

/// Symmetric: flip with probability r to a uniformly chosen different class.
/// Asymmetric: flip with probability r to (y + 1) mod K.
LabeledDataset inject_noise(const LabeledDataset& clean, const NoiseSpec& noise);

enum class OodRegime { far, near };

struct OodSpec {
  int n_samples = 1000;
  std::uint64_t seed = 0;
  /// Gap between the ID range and the far box, as a fraction of the range width.
  double far_gap = 0.5;
  /// Distance of near-OOD centers from their nearest class centroid, in cluster radii.
  double near_distance = 1.5;
  /// Std of near-OOD samples relative to the mean within-class std.
  double near_spread = 0.5;
};

struct OodSet {
  MatrixXd features;             // input_dim x n
  std::vector<VectorXd> centers;  // near regime only
  double cluster_radius = 0.0;    // near regime only
};

/// far: uniform over a box beyond the per-dimension ID maxima (no overlap
/// with the ID range in any dimension). near: Gaussians centered exactly
/// near_distance cluster radii from their nearest ID centroid.
OodSet generate_ood(const OodSpec& spec, const LabeledDataset& id, OodRegime regime);

// CSV I/O. Values are written with 17 significant digits.
void write_dataset_csv(std::ostream& out, const LabeledDataset& ds);
LabeledDataset read_dataset_csv(std::istream& in, int num_classes = 0);
void write_features_csv(std::ostream& out, const MatrixXd& features);
MatrixXd read_features_csv(std::istream& in);

void save_dataset(const std::string& path, const LabeledDataset& ds);
LabeledDataset load_dataset(const std::string& path, int num_classes = 0);
void save_features(const std::string& path, const MatrixXd& features);
MatrixXd load_features(const std::string& path);

}  // namespace nlvos::data
