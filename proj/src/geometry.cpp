#include "nlvos/geometry/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "nlvos/error.hpp"

namespace nlvos::geometry {

bool Envelope::contains(const VectorXd& z) const {
  return z.size() == dim() && (z.array() >= lower.array()).all() && (z.array() <= upper.array()).all();
}

double Envelope::log_volume(double edge_floor) const {
  double s = 0.0;
  for (Eigen::Index j = 0; j < dim(); ++j) s += std::log(std::max(upper(j) - lower(j), edge_floor));
  return s;
}

double Envelope::mean_edge() const { return dim() == 0 ? 0.0 : (upper - lower).mean(); }

std::optional<Envelope> estimate_envelope(const MatrixXd& features, int epoch) {
  if (features.cols() == 0) return std::nullopt;
  Envelope env;
  env.lower = features.rowwise().minCoeff();
  env.upper = features.rowwise().maxCoeff();
  env.epoch = epoch;
  return env;
}

std::optional<VectorXd> CentroidSet::centroid(int cls) const {
  const auto it = std::lower_bound(classes.begin(), classes.end(), cls);
  if (it == classes.end() || *it != cls) return std::nullopt;
  return VectorXd(means.col(it - classes.begin()));
}

CentroidSet class_centroids(const MatrixXd& features, std::span<const int> labels, int epoch) {
  if (static_cast<Eigen::Index>(labels.size()) != features.cols()) {
    throw StructuralError("label count does not match feature count");
  }
  std::map<int, std::pair<VectorXd, std::size_t>> acc;
  for (Eigen::Index i = 0; i < features.cols(); ++i) {
    auto [it, fresh] = acc.try_emplace(labels[static_cast<std::size_t>(i)],
                                       VectorXd::Zero(features.rows()), 0);
    it->second.first += features.col(i);
    ++it->second.second;
  }
  CentroidSet set;
  set.epoch = epoch;
  set.means.resize(features.rows(), static_cast<Eigen::Index>(acc.size()));
  Eigen::Index c = 0;
  for (const auto& [cls, entry] : acc) {
    set.classes.push_back(cls);
    set.counts.push_back(entry.second);
    set.means.col(c++) = entry.first / static_cast<double>(entry.second);
  }
  return set;
}

double min_distance(const VectorXd& z, const CentroidSet& centroids) {
  if (centroids.empty()) throw ParameterError("distance to an empty centroid set");
  return (centroids.means.colwise() - z).colwise().norm().minCoeff();
}

double mean_intercentroid_distance(const CentroidSet& centroids) {
  const Eigen::Index c = centroids.means.cols();
  if (c < 2) return 0.0;
  double sum = 0.0;
  for (Eigen::Index a = 0; a < c; ++a) {
    for (Eigen::Index b = a + 1; b < c; ++b) sum += (centroids.means.col(a) - centroids.means.col(b)).norm();
  }
  return sum / static_cast<double>(c * (c - 1) / 2);
}

std::string to_string(Sampler s) {
  switch (s) {
    case Sampler::uniform: return "uniform";
    case Sampler::gaussian: return "gaussian";
    case Sampler::perturbation: return "perturbation";
    case Sampler::hybrid: return "hybrid";
  }
  return "uniform";
}

std::optional<Sampler> parse_sampler(std::string_view name) {
  if (name == "uniform") return Sampler::uniform;
  if (name == "gaussian") return Sampler::gaussian;
  if (name == "perturbation") return Sampler::perturbation;
  if (name == "hybrid") return Sampler::hybrid;
  return std::nullopt;
}

namespace {

void clip(MatrixXd& z, const Envelope& env) {
  for (Eigen::Index c = 0; c < z.cols(); ++c) {
    z.col(c) = z.col(c).cwiseMax(env.lower).cwiseMin(env.upper);
  }
}

// A zero-width edge yields the fixed endpoint.
MatrixXd sample_uniform(const Envelope& env, std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  MatrixXd z(env.dim(), static_cast<Eigen::Index>(n));
  for (Eigen::Index c = 0; c < z.cols(); ++c) {
    for (Eigen::Index j = 0; j < env.dim(); ++j) {
      const double width = env.upper(j) - env.lower(j);
      z(j, c) = width > 0.0 ? env.lower(j) + width * unit(rng) : env.lower(j);
    }
  }
  return z;
}

MatrixXd sample_gaussian(const CentroidSet& centroids, const MatrixXd& support,
                         std::span<const int> labels, std::size_t n, std::mt19937_64& rng) {
  const Eigen::Index d = support.rows();
  const auto k = static_cast<Eigen::Index>(centroids.classes.size());
  MatrixXd stddev = MatrixXd::Zero(d, k);
  for (Eigen::Index i = 0; i < support.cols(); ++i) {
    const auto it = std::lower_bound(centroids.classes.begin(), centroids.classes.end(),
                                     labels[static_cast<std::size_t>(i)]);
    const auto c = it - centroids.classes.begin();
    stddev.col(c) += (support.col(i) - centroids.means.col(c)).cwiseAbs2();
  }
  for (Eigen::Index c = 0; c < k; ++c) {
    stddev.col(c) = (stddev.col(c) / static_cast<double>(centroids.counts[static_cast<std::size_t>(c)])).cwiseSqrt();
  }
  std::discrete_distribution<Eigen::Index> pick(centroids.counts.begin(), centroids.counts.end());
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd z(d, static_cast<Eigen::Index>(n));
  for (Eigen::Index col = 0; col < z.cols(); ++col) {
    const Eigen::Index c = pick(rng);
    for (Eigen::Index j = 0; j < d; ++j) z(j, col) = centroids.means(j, c) + stddev(j, c) * normal(rng);
  }
  return z;
}

MatrixXd sample_perturbation(const Envelope& env, const MatrixXd& support, std::size_t n, double scale,
                             std::mt19937_64& rng) {
  const double sigma = scale * env.mean_edge();
  std::uniform_int_distribution<Eigen::Index> pick(0, support.cols() - 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd z(support.rows(), static_cast<Eigen::Index>(n));
  for (Eigen::Index col = 0; col < z.cols(); ++col) {
    z.col(col) = support.col(pick(rng));
    if (sigma > 0.0) {
      for (Eigen::Index j = 0; j < z.rows(); ++j) z(j, col) += sigma * normal(rng);
    }
  }
  return z;
}

}  // namespace

MatrixXd sample_candidates(const Envelope& envelope, const CentroidSet& centroids,
                           const MatrixXd& support_features, std::span<const int> support_labels,
                           std::size_t n_cand, Sampler strategy, std::mt19937_64& rng,
                           const SamplerOptions& options) {
  if (n_cand == 0) throw ParameterError("candidate count must be at least 1");
  if (envelope.lower.size() != envelope.upper.size() ||
      !(envelope.lower.array() <= envelope.upper.array()).all()) {
    throw ParameterError("invalid envelope");
  }
  const bool needs_support = strategy != Sampler::uniform;
  if (needs_support && (support_features.cols() == 0 ||
                        static_cast<Eigen::Index>(support_labels.size()) != support_features.cols() ||
                        centroids.empty())) {
    throw ParameterError("support-based samplers need labeled support features and centroids");
  }
  MatrixXd z;
  switch (strategy) {
    case Sampler::uniform:
      z = sample_uniform(envelope, n_cand, rng);
      break;
    case Sampler::gaussian:
      z = sample_gaussian(centroids, support_features, support_labels, n_cand, rng);
      break;
    case Sampler::perturbation:
      z = sample_perturbation(envelope, support_features, n_cand, options.perturbation_scale, rng);
      break;
    case Sampler::hybrid: {
      const std::size_t third = n_cand / 3;
      const std::size_t rest = n_cand - 2 * third;
      z.resize(envelope.dim(), static_cast<Eigen::Index>(n_cand));
      const auto t = static_cast<Eigen::Index>(third);
      if (third > 0) {
        z.leftCols(t) = sample_uniform(envelope, third, rng);
        z.middleCols(t, t) = sample_gaussian(centroids, support_features, support_labels, third, rng);
      }
      z.rightCols(static_cast<Eigen::Index>(rest)) =
          sample_perturbation(envelope, support_features, rest, options.perturbation_scale, rng);
      break;
    }
  }
  if (options.clip_to_envelope && strategy != Sampler::uniform) clip(z, envelope);
  return z;
}

OutlierBatch filter_outliers(const MatrixXd& candidates, const CentroidSet& centroids, double tau_rej,
                             Sampler sampler) {
  if (centroids.empty()) throw ParameterError("outlier filtering needs at least one centroid");
  OutlierBatch batch;
  batch.sampler = sampler;
  batch.n_candidates = static_cast<std::size_t>(candidates.cols());
  for (Eigen::Index c = 0; c < candidates.cols(); ++c) {
    if (min_distance(candidates.col(c), centroids) > tau_rej) {
      batch.accepted_index.push_back(static_cast<std::size_t>(c));
    }
  }
  batch.accepted.resize(candidates.rows(), static_cast<Eigen::Index>(batch.accepted_index.size()));
  for (std::size_t i = 0; i < batch.accepted_index.size(); ++i) {
    batch.accepted.col(static_cast<Eigen::Index>(i)) = candidates.col(static_cast<Eigen::Index>(batch.accepted_index[i]));
  }
  return batch;
}

}  // namespace nlvos::geometry
