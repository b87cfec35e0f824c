#pragma once

#include <algorithm>
#include <cmath>

#include "nlvos/nn/losses.hpp"
#include "nlvos/nn/propagation.hpp"

namespace nlvos::geometry {

/// Energy-based BCE regularizer. Clean energies are pushed down through
/// -log(1 - sigmoid(E)) and outlier energies up through -log(sigmoid(E)).
template <typename Scalar>
struct SpadeTerms {
  Scalar value = Scalar(0);
  Scalar clean_term = Scalar(0);
  Scalar outlier_term = Scalar(0);
  nn::VectorX<Scalar> d_clean_energy;    // dL / dE per clean sample
  nn::VectorX<Scalar> d_outlier_energy;  // dL / dE per outlier
};

namespace detail {

// log(1 + e^x) without overflow.
template <typename Scalar>
Scalar softplus(Scalar x) {
  return x > Scalar(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

}  // namespace detail

/// Each per-sample term is clamped at -log(1e-12); clamped terms carry no gradient.
template <typename Scalar>
SpadeTerms<Scalar> spade_from_energies(const nn::VectorX<Scalar>& clean_energy,
                                       const nn::VectorX<Scalar>& outlier_energy) {
  const Scalar cap = -std::log(static_cast<Scalar>(nn::kProbFloor));
  SpadeTerms<Scalar> out;
  out.d_clean_energy = nn::VectorX<Scalar>::Zero(clean_energy.size());
  out.d_outlier_energy = nn::VectorX<Scalar>::Zero(outlier_energy.size());
  if (clean_energy.size() > 0) {
    const auto n = static_cast<Scalar>(clean_energy.size());
    for (Eigen::Index i = 0; i < clean_energy.size(); ++i) {
      const Scalar e = clean_energy(i);
      const Scalar term = detail::softplus(e);
      if (term < cap) {
        out.clean_term += term;
        out.d_clean_energy(i) = detail::sigmoid(e) / n;
      } else {
        out.clean_term += cap;
      }
    }
    out.clean_term /= n;
  }
  if (outlier_energy.size() > 0) {
    const auto n = static_cast<Scalar>(outlier_energy.size());
    for (Eigen::Index i = 0; i < outlier_energy.size(); ++i) {
      const Scalar e = outlier_energy(i);
      const Scalar term = detail::softplus(-e);
      if (term < cap) {
        out.outlier_term += term;
        out.d_outlier_energy(i) = -detail::sigmoid(-e) / n;
      } else {
        out.outlier_term += cap;
      }
    }
    out.outlier_term /= n;
  }
  out.value = out.clean_term + out.outlier_term;
  return out;
}

/// L_spade on a clean feature batch and an outlier batch (both d x n), with
/// gradients for the classifier head accumulated into `grads` when given.
/// Returns the loss value.
template <typename Scalar>
Scalar spade_loss(const nn::DenseNet<Scalar>& net, const nn::MatrixX<Scalar>& clean_features,
                  const nn::MatrixX<Scalar>& outliers, Scalar temperature,
                  nn::GradientBundle<Scalar>* grads = nullptr) {
  const auto clean_pass = nn::trace_head(net, clean_features);
  const auto outlier_pass = nn::trace_head(net, outliers);
  const auto clean_e = nn::energy_batch<Scalar>(clean_pass.logits(), temperature);
  const auto outlier_e = nn::energy_batch<Scalar>(outlier_pass.logits(), temperature);
  const auto terms = spade_from_energies<Scalar>(clean_e.values, outlier_e.values);
  if (grads) {
    nn::backward(net, clean_pass, nn::MatrixX<Scalar>(clean_e.d_logits * terms.d_clean_energy.asDiagonal()),
                 *grads);
    nn::backward(net, outlier_pass,
                 nn::MatrixX<Scalar>(outlier_e.d_logits * terms.d_outlier_energy.asDiagonal()), *grads);
    grads->loss += terms.value;
  }
  return terms.value;
}

}  // namespace nlvos::geometry
