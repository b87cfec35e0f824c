#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace nlvos::geometry {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Axis-aligned box spanned by the per-dimension extrema of the support features.
struct Envelope {
  VectorXd lower;
  VectorXd upper;
  int epoch = 0;

  Eigen::Index dim() const { return lower.size(); }
  bool contains(const VectorXd& z) const;
  /// Sum of log edge lengths; edges are floored at `edge_floor`.
  double log_volume(double edge_floor = 1e-6) const;
  double mean_edge() const;
};

/// Per-dimension min/max over the columns of `features`. Returns nullopt for
/// an empty set, which callers treat as "skip geometry this epoch".
std::optional<Envelope> estimate_envelope(const MatrixXd& features, int epoch = 0);

/// Class means of the support features; absent classes have no entry.
struct CentroidSet {
  std::vector<int> classes;          // sorted ascending
  std::vector<std::size_t> counts;   // support size per class
  MatrixXd means;                    // d x classes.size()
  int epoch = 0;

  bool empty() const { return classes.empty(); }
  std::optional<VectorXd> centroid(int cls) const;
};

CentroidSet class_centroids(const MatrixXd& features, std::span<const int> labels, int epoch = 0);

/// Euclidean distance to the nearest centroid.
double min_distance(const VectorXd& z, const CentroidSet& centroids);

/// Mean pairwise Euclidean distance between centroids (0 with fewer than two).
double mean_intercentroid_distance(const CentroidSet& centroids);

enum class Sampler { uniform, gaussian, perturbation, hybrid };

std::string to_string(Sampler s);
std::optional<Sampler> parse_sampler(std::string_view name);

struct SamplerOptions {
  /// Perturbation noise std as a fraction of the mean envelope edge.
  double perturbation_scale = 0.1;
  /// Clip gaussian/perturbation candidates into the envelope.
  bool clip_to_envelope = true;
};

/// Draws n_cand candidate outliers (columns). Uniform samples the box;
/// gaussian fits a diagonal Gaussian per class and picks classes by support
/// size; perturbation jitters random support features; hybrid splits the
/// budget in thirds across the other three.
MatrixXd sample_candidates(const Envelope& envelope, const CentroidSet& centroids,
                           const MatrixXd& support_features, std::span<const int> support_labels,
                           std::size_t n_cand, Sampler strategy, std::mt19937_64& rng,
                           const SamplerOptions& options = {});

struct OutlierBatch {
  MatrixXd accepted;                       // d x n_accepted, in candidate order
  std::vector<std::size_t> accepted_index;  // candidate columns kept
  std::size_t n_candidates = 0;
  Sampler sampler = Sampler::uniform;

  std::size_t n_accepted() const { return accepted_index.size(); }
  double acceptance_rate() const {
    return n_candidates == 0 ? 0.0 : static_cast<double>(n_accepted()) / static_cast<double>(n_candidates);
  }
};

/// Keeps candidate z iff min_c ||z - mu_c|| > tau_rej.
OutlierBatch filter_outliers(const MatrixXd& candidates, const CentroidSet& centroids, double tau_rej,
                             Sampler sampler = Sampler::uniform);

}  // namespace nlvos::geometry
