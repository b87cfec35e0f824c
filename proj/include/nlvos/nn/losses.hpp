#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <span>

#include "nlvos/error.hpp"
#include "nlvos/nn/dense_net.hpp"

namespace nlvos::nn {

inline constexpr double kProbFloor = 1e-12;

template <typename Scalar>
Scalar log_sum_exp(const VectorX<Scalar>& v) {
  const Scalar m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

template <typename Scalar>
VectorX<Scalar> softmax(const VectorX<Scalar>& logits) {
  const Scalar m = logits.maxCoeff();
  VectorX<Scalar> e = (logits.array() - m).exp().matrix();
  return e / e.sum();
}

/// Column-wise softmax of logits / temperature.
template <typename Scalar>
MatrixX<Scalar> softmax_columns(const MatrixX<Scalar>& logits, Scalar temperature = Scalar(1)) {
  MatrixX<Scalar> out(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    out.col(c) = softmax<Scalar>(logits.col(c) / temperature);
  }
  return out;
}

/// E = -T log sum_k exp(l_k / T), via a max-shifted log-sum-exp.
template <typename Scalar>
Scalar energy(const VectorX<Scalar>& logits, Scalar temperature = Scalar(1)) {
  return -temperature * log_sum_exp<Scalar>(logits / temperature);
}

/// Generalized cross entropy (1 - p_y^q) / q.
template <typename Scalar>
Scalar gce_loss(Scalar p_y, Scalar q) {
  if (!(q > Scalar(0)) || q > Scalar(1)) throw ParameterError("GCE exponent q must lie in (0, 1]");
  p_y = std::clamp(p_y, Scalar(0), Scalar(1));
  return (Scalar(1) - std::pow(p_y, q)) / q;
}

template <typename Scalar>
Scalar cross_entropy(const VectorX<Scalar>& probs, Eigen::Index label) {
  return -std::log(std::max(probs(label), static_cast<Scalar>(kProbFloor)));
}

/// -sum_k t_k log p_k
template <typename Scalar>
Scalar soft_cross_entropy(const VectorX<Scalar>& probs, const VectorX<Scalar>& target) {
  Scalar s = 0;
  for (Eigen::Index k = 0; k < probs.size(); ++k) {
    s -= target(k) * std::log(std::max(probs(k), static_cast<Scalar>(kProbFloor)));
  }
  return s;
}

/// Batch-mean loss with its gradient with respect to the logits it was
/// computed from (same shape as the logit matrix).
template <typename Scalar>
struct LossGrad {
  Scalar value = Scalar(0);
  MatrixX<Scalar> d_logits;
};

namespace detail {

/// Pulls a gradient w.r.t. softmax probabilities back to the logits.
template <typename Scalar>
MatrixX<Scalar> softmax_backward(const MatrixX<Scalar>& probs, const MatrixX<Scalar>& d_probs) {
  MatrixX<Scalar> out(probs.rows(), probs.cols());
  for (Eigen::Index c = 0; c < probs.cols(); ++c) {
    const Scalar dot = probs.col(c).dot(d_probs.col(c));
    out.col(c) = probs.col(c).cwiseProduct((d_probs.col(c).array() - dot).matrix());
  }
  return out;
}

template <typename Scalar>
void check_labels(const MatrixX<Scalar>& logits, std::span<const int> labels) {
  if (static_cast<Eigen::Index>(labels.size()) != logits.cols()) {
    throw StructuralError("label count does not match batch size");
  }
  for (int y : labels) {
    if (y < 0 || y >= logits.rows()) throw StructuralError("label out of range");
  }
}

}  // namespace detail

template <typename Scalar>
LossGrad<Scalar> cross_entropy_batch(const MatrixX<Scalar>& logits, std::span<const int> labels) {
  detail::check_labels(logits, labels);
  const auto n = static_cast<Scalar>(logits.cols());
  LossGrad<Scalar> out;
  out.d_logits = softmax_columns(logits);
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    const int y = labels[static_cast<std::size_t>(c)];
    out.value += log_sum_exp<Scalar>(logits.col(c)) - logits(y, c);
    out.d_logits(y, c) -= Scalar(1);
  }
  out.value /= n;
  out.d_logits /= n;
  return out;
}

template <typename Scalar>
LossGrad<Scalar> gce_batch(const MatrixX<Scalar>& logits, std::span<const int> labels, Scalar q) {
  detail::check_labels(logits, labels);
  if (!(q > Scalar(0)) || q > Scalar(1)) throw ParameterError("GCE exponent q must lie in (0, 1]");
  const auto n = static_cast<Scalar>(logits.cols());
  const MatrixX<Scalar> probs = softmax_columns(logits);
  LossGrad<Scalar> out;
  out.d_logits.resize(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    const int y = labels[static_cast<std::size_t>(c)];
    const Scalar pq = std::pow(probs(y, c), q);
    out.value += (Scalar(1) - pq) / q;
    // dL/dl_k = -p_y^q (1[k = y] - p_k)
    out.d_logits.col(c) = pq * probs.col(c);
    out.d_logits(y, c) -= pq;
  }
  out.value /= n;
  out.d_logits /= n;
  return out;
}

/// Mean over samples of -sum_k t_k log softmax(l)_k.
template <typename Scalar>
LossGrad<Scalar> soft_cross_entropy_batch(const MatrixX<Scalar>& logits,
                                          const MatrixX<Scalar>& targets) {
  if (targets.rows() != logits.rows() || targets.cols() != logits.cols()) {
    throw StructuralError("soft targets do not match logits");
  }
  const auto n = static_cast<Scalar>(logits.cols());
  const MatrixX<Scalar> probs = softmax_columns(logits);
  LossGrad<Scalar> out;
  out.d_logits.resize(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    const Scalar lse = log_sum_exp<Scalar>(logits.col(c));
    const Scalar mass = targets.col(c).sum();
    out.value += mass * lse - targets.col(c).dot(logits.col(c));
    out.d_logits.col(c) = mass * probs.col(c) - targets.col(c);
  }
  out.value /= n;
  out.d_logits /= n;
  return out;
}

/// Mean squared error between softmax(l) and targets, averaged over classes
/// and samples.
template <typename Scalar>
LossGrad<Scalar> mse_batch(const MatrixX<Scalar>& logits, const MatrixX<Scalar>& targets) {
  if (targets.rows() != logits.rows() || targets.cols() != logits.cols()) {
    throw StructuralError("targets do not match logits");
  }
  const auto count = static_cast<Scalar>(logits.size());
  const MatrixX<Scalar> probs = softmax_columns(logits);
  const MatrixX<Scalar> diff = probs - targets;
  LossGrad<Scalar> out;
  out.value = diff.squaredNorm() / count;
  out.d_logits = detail::softmax_backward<Scalar>(probs, (Scalar(2) / count) * diff);
  return out;
}

/// KL(uniform || batch-mean prediction) = sum_k (1/K) log((1/K) / pbar_k).
template <typename Scalar>
LossGrad<Scalar> prior_kl_batch(const MatrixX<Scalar>& logits) {
  const Eigen::Index k = logits.rows();
  const auto n = static_cast<Scalar>(logits.cols());
  const Scalar prior = Scalar(1) / static_cast<Scalar>(k);
  const MatrixX<Scalar> probs = softmax_columns(logits);
  const VectorX<Scalar> mean = probs.rowwise().mean();
  LossGrad<Scalar> out;
  VectorX<Scalar> d_mean(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const Scalar p = std::max(mean(i), static_cast<Scalar>(kProbFloor));
    out.value += prior * std::log(prior / p);
    d_mean(i) = mean(i) > static_cast<Scalar>(kProbFloor) ? -prior / p : Scalar(0);
  }
  MatrixX<Scalar> d_probs = (d_mean / n).replicate(1, logits.cols());
  out.d_logits = detail::softmax_backward<Scalar>(probs, d_probs);
  return out;
}

/// Mean over samples of sum_k (l_k - t_k)^2 on raw logits (regression surrogate).
template <typename Scalar>
LossGrad<Scalar> squared_error_batch(const MatrixX<Scalar>& logits, const MatrixX<Scalar>& targets) {
  if (targets.rows() != logits.rows() || targets.cols() != logits.cols()) {
    throw StructuralError("targets do not match logits");
  }
  const auto n = static_cast<Scalar>(logits.cols());
  LossGrad<Scalar> out;
  out.value = (logits - targets).squaredNorm() / n;
  out.d_logits = (Scalar(2) / n) * (logits - targets);
  return out;
}

/// Per-column energies and dE/dl = -softmax(l / T).
template <typename Scalar>
struct EnergyBatch {
  VectorX<Scalar> values;
  MatrixX<Scalar> d_logits;
};

template <typename Scalar>
EnergyBatch<Scalar> energy_batch(const MatrixX<Scalar>& logits, Scalar temperature) {
  if (!(temperature > Scalar(0))) throw ParameterError("energy temperature must be positive");
  EnergyBatch<Scalar> out;
  out.values.resize(logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    out.values(c) = energy<Scalar>(logits.col(c), temperature);
  }
  out.d_logits = -softmax_columns<Scalar>(logits, temperature);
  return out;
}

}  // namespace nlvos::nn
