#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "nlvos/error.hpp"
#include "nlvos/nn/losses.hpp"

namespace nlvos::ssl {

template <typename Scalar>
using MatrixX = nn::MatrixX<Scalar>;
template <typename Scalar>
using VectorX = nn::VectorX<Scalar>;

struct LossWeights {
  double lambda_u = 30.0;
  double lambda_reg = 1.0;
  double lambda_cl = 1.0;
  double lambda_spade = 0.1;
  double contrastive_temperature = 0.5;  // delta
  double sharpen_temperature = 0.5;

  void validate() const {
    if (lambda_u < 0 || lambda_reg < 0 || lambda_cl < 0 || lambda_spade < 0) {
      throw ParameterError("loss weights must be nonnegative");
    }
    if (!(contrastive_temperature > 0) || !(sharpen_temperature > 0)) {
      throw ParameterError("temperatures must be positive");
    }
  }
};

/// p -> p^(1/T) / sum p^(1/T), column-wise.
template <typename Scalar>
MatrixX<Scalar> sharpen(const MatrixX<Scalar>& probs, Scalar temperature) {
  if (!(temperature > Scalar(0))) throw ParameterError("sharpening temperature must be positive");
  MatrixX<Scalar> out(probs.rows(), probs.cols());
  const Scalar inv = Scalar(1) / temperature;
  for (Eigen::Index c = 0; c < probs.cols(); ++c) {
    // Work in log space so tiny temperatures do not underflow every entry.
    VectorX<Scalar> logp(probs.rows());
    for (Eigen::Index k = 0; k < probs.rows(); ++k) {
      logp(k) = probs(k, c) > Scalar(0) ? inv * std::log(probs(k, c))
                                        : -std::numeric_limits<Scalar>::infinity();
    }
    out.col(c) = nn::softmax<Scalar>(logp);
  }
  return out;
}

/// Co-refined targets for labeled samples:
/// sharpen(w * onehot(y) + (1 - w) * mean_prediction).
template <typename Scalar>
MatrixX<Scalar> refine_labels(std::span<const int> noisy_labels, std::span<const double> clean_prob,
                              const MatrixX<Scalar>& mean_prediction, Scalar sharpen_temperature) {
  const Eigen::Index n = mean_prediction.cols();
  if (static_cast<Eigen::Index>(noisy_labels.size()) != n ||
      static_cast<Eigen::Index>(clean_prob.size()) != n) {
    throw StructuralError("refine_labels inputs disagree in batch size");
  }
  MatrixX<Scalar> mixed = mean_prediction;
  for (Eigen::Index c = 0; c < n; ++c) {
    const auto w = static_cast<Scalar>(clean_prob[static_cast<std::size_t>(c)]);
    if (w < Scalar(0) || w > Scalar(1)) throw ParameterError("clean probability outside [0, 1]");
    mixed.col(c) *= Scalar(1) - w;
    mixed(noisy_labels[static_cast<std::size_t>(c)], c) += w;
  }
  return sharpen<Scalar>(mixed, sharpen_temperature);
}

/// Pseudo-labels: average of every supplied prediction matrix (networks x
/// augmented views), then sharpened.
template <typename Scalar>
MatrixX<Scalar> guess_labels(std::span<const MatrixX<Scalar>> predictions, Scalar sharpen_temperature) {
  if (predictions.empty()) throw ParameterError("guess_labels needs at least one prediction");
  MatrixX<Scalar> mean = predictions.front();
  for (std::size_t i = 1; i < predictions.size(); ++i) mean += predictions[i];
  mean /= static_cast<Scalar>(predictions.size());
  return sharpen<Scalar>(mean, sharpen_temperature);
}

/// lambda' = max(lambda, 1 - lambda), so mixed samples stay closer to batch A.
inline double mix_coefficient(double lambda) { return std::max(lambda, 1.0 - lambda); }

/// lambda ~ Beta(alpha, alpha) via two Gamma draws, folded by mix_coefficient.
inline double sample_mix_coefficient(double alpha, std::mt19937_64& rng) {
  if (!(alpha > 0)) throw ParameterError("mixup alpha must be positive");
  std::gamma_distribution<double> gamma(alpha, 1.0);
  const double a = gamma(rng);
  const double b = gamma(rng);
  const double lambda = (a + b) > 0 ? a / (a + b) : 0.5;
  return mix_coefficient(lambda);
}

template <typename Scalar>
struct RefinedBatch {
  MatrixX<Scalar> inputs;
  MatrixX<Scalar> targets;
  std::vector<bool> labeled;  // origin of the A-side sample
  double lambda = 1.0;
};

/// x' = l x_A + (1 - l) x_B for inputs and targets, l = mix_coefficient(lambda).
template <typename Scalar>
RefinedBatch<Scalar> mixup(const MatrixX<Scalar>& inputs_a, const MatrixX<Scalar>& targets_a,
                           const MatrixX<Scalar>& inputs_b, const MatrixX<Scalar>& targets_b,
                           double lambda, std::vector<bool> labeled = {}) {
  if (inputs_a.rows() != inputs_b.rows() || inputs_a.cols() != inputs_b.cols() ||
      targets_a.rows() != targets_b.rows() || targets_a.cols() != targets_b.cols() ||
      inputs_a.cols() != targets_a.cols()) {
    throw StructuralError("mixup batches differ in shape");
  }
  RefinedBatch<Scalar> out;
  out.lambda = mix_coefficient(lambda);
  const auto l = static_cast<Scalar>(out.lambda);
  out.inputs = l * inputs_a + (Scalar(1) - l) * inputs_b;
  out.targets = l * targets_a + (Scalar(1) - l) * targets_b;
  out.labeled = labeled.empty() ? std::vector<bool>(static_cast<std::size_t>(inputs_a.cols()), true)
                                : std::move(labeled);
  return out;
}

template <typename Scalar>
struct SslTerms {
  Scalar l_x = Scalar(0);
  Scalar l_u = Scalar(0);
  Scalar l_reg = Scalar(0);
  Scalar value = Scalar(0);
  MatrixX<Scalar> d_labeled_logits;
  MatrixX<Scalar> d_unlabeled_logits;
};

/// L_ssl = mean soft-CE on the labeled part + lambda_u * MSE on the unlabeled
/// part + lambda_reg * KL(uniform || mean prediction over both parts).
template <typename Scalar>
SslTerms<Scalar> ssl_loss(const MatrixX<Scalar>& labeled_logits, const MatrixX<Scalar>& labeled_targets,
                          const MatrixX<Scalar>& unlabeled_logits,
                          const MatrixX<Scalar>& unlabeled_targets, const LossWeights& weights) {
  if (labeled_logits.cols() == 0) throw ParameterError("ssl_loss needs a non-empty labeled part");
  SslTerms<Scalar> out;
  const auto lx = nn::soft_cross_entropy_batch<Scalar>(labeled_logits, labeled_targets);
  out.l_x = lx.value;
  out.d_labeled_logits = lx.d_logits;
  const Eigen::Index nl = labeled_logits.cols();
  const Eigen::Index nu = unlabeled_logits.cols();
  out.d_unlabeled_logits = MatrixX<Scalar>::Zero(labeled_logits.rows(), nu);
  const auto lambda_u = static_cast<Scalar>(weights.lambda_u);
  const auto lambda_reg = static_cast<Scalar>(weights.lambda_reg);
  if (nu > 0) {
    const auto lu = nn::mse_batch<Scalar>(unlabeled_logits, unlabeled_targets);
    out.l_u = lu.value;
    out.d_unlabeled_logits = lambda_u * lu.d_logits;
  }
  MatrixX<Scalar> all(labeled_logits.rows(), nl + nu);
  all << labeled_logits, unlabeled_logits;
  const auto reg = nn::prior_kl_batch<Scalar>(all);
  out.l_reg = reg.value;
  out.d_labeled_logits += lambda_reg * reg.d_logits.leftCols(nl);
  out.d_unlabeled_logits += lambda_reg * reg.d_logits.rightCols(nu);
  out.value = out.l_x + lambda_u * out.l_u + lambda_reg * out.l_reg;
  return out;
}

template <typename Scalar>
struct ContrastiveTerms {
  Scalar value = Scalar(0);
  MatrixX<Scalar> d_projections;
};

/// NT-Xent over 2N unit projections whose columns (2i, 2i+1) are two views of
/// one sample. The denominator of anchor n excludes only k = n.
template <typename Scalar>
ContrastiveTerms<Scalar> contrastive_loss(const MatrixX<Scalar>& z, Scalar delta) {
  if (!(delta > Scalar(0))) throw ParameterError("contrastive temperature must be positive");
  const Eigen::Index m = z.cols();
  if (m < 2 || m % 2 != 0) throw StructuralError("contrastive loss needs an even number (>= 2) of views");
  const MatrixX<Scalar> sim = (z.transpose() * z) / delta;
  MatrixX<Scalar> d_sim = MatrixX<Scalar>::Zero(m, m);
  ContrastiveTerms<Scalar> out;
  const Scalar scale = Scalar(1) / static_cast<Scalar>(m);
  for (Eigen::Index n = 0; n < m; ++n) {
    const Eigen::Index pos = (n % 2 == 0) ? n + 1 : n - 1;
    Scalar mx = -std::numeric_limits<Scalar>::infinity();
    for (Eigen::Index k = 0; k < m; ++k) {
      if (k != n) mx = std::max(mx, sim(n, k));
    }
    Scalar denom = 0;
    for (Eigen::Index k = 0; k < m; ++k) {
      if (k != n) denom += std::exp(sim(n, k) - mx);
    }
    const Scalar lse = mx + std::log(denom);
    out.value -= scale * (sim(n, pos) - lse);
    for (Eigen::Index k = 0; k < m; ++k) {
      if (k != n) d_sim(n, k) = scale * std::exp(sim(n, k) - lse);
    }
    d_sim(n, pos) -= scale;
  }
  out.d_projections = z * (d_sim + d_sim.transpose()) / delta;
  return out;
}

/// L_total = L_ssl + lambda_cl * l_cl + lambda_spade * L_spade.
inline double total_loss(double ssl, double cl, double spade, const LossWeights& weights) {
  const std::pair<const char*, double> terms[] = {{"L_ssl", ssl}, {"l_cl", cl}, {"L_spade", spade}};
  for (const auto& [name, v] : terms) {
    if (!std::isfinite(v)) throw TrainingError(std::string("non-finite loss term ") + name);
  }
  return ssl + weights.lambda_cl * cl + weights.lambda_spade * spade;
}

}  // namespace nlvos::ssl
