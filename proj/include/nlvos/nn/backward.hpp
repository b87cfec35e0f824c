#pragma once

#include <cmath>
#include <string>
#include <variant>
#include <vector>

#include "nlvos/nn/losses.hpp"
#include "nlvos/nn/propagation.hpp"

namespace nlvos::nn {

struct CrossEntropySpec {
  std::vector<int> labels;
};
struct GceSpec {
  std::vector<int> labels;
  double q = 0.7;
};
template <typename Scalar>
struct SoftCrossEntropySpec {
  MatrixX<Scalar> targets;
};
template <typename Scalar>
struct MseSpec {
  MatrixX<Scalar> targets;
};
struct PriorKlSpec {};
template <typename Scalar>
struct SquaredErrorSpec {
  MatrixX<Scalar> targets;
};

/// Single-term losses on the logits of one batch. Composite objectives are
/// assembled in ssl::total_objective.
template <typename Scalar>
using LossSpec = std::variant<CrossEntropySpec, GceSpec, SoftCrossEntropySpec<Scalar>,
                              MseSpec<Scalar>, PriorKlSpec, SquaredErrorSpec<Scalar>>;

template <typename Scalar>
LossGrad<Scalar> evaluate_logit_loss(const MatrixX<Scalar>& z, const LossSpec<Scalar>& spec) {
  struct Visitor {
    const MatrixX<Scalar>& z;
    LossGrad<Scalar> operator()(const CrossEntropySpec& s) const {
      return cross_entropy_batch<Scalar>(z, s.labels);
    }
    LossGrad<Scalar> operator()(const GceSpec& s) const {
      return gce_batch<Scalar>(z, s.labels, static_cast<Scalar>(s.q));
    }
    LossGrad<Scalar> operator()(const SoftCrossEntropySpec<Scalar>& s) const {
      return soft_cross_entropy_batch<Scalar>(z, s.targets);
    }
    LossGrad<Scalar> operator()(const MseSpec<Scalar>& s) const {
      return mse_batch<Scalar>(z, s.targets);
    }
    LossGrad<Scalar> operator()(const PriorKlSpec&) const { return prior_kl_batch<Scalar>(z); }
    LossGrad<Scalar> operator()(const SquaredErrorSpec<Scalar>& s) const {
      return squared_error_batch<Scalar>(z, s.targets);
    }
  };
  return std::visit(Visitor{z}, spec);
}

/// Analytic gradient of a logit loss over the batch `inputs` (columns).
template <typename Scalar>
GradientBundle<Scalar> backward(const DenseNet<Scalar>& net, const MatrixX<Scalar>& inputs,
                                const LossSpec<Scalar>& spec, long batch_id = -1) {
  const ForwardPass<Scalar> pass = trace_forward(net, inputs);
  const LossGrad<Scalar> loss = evaluate_logit_loss(pass.logits(), spec);
  if (!std::isfinite(static_cast<double>(loss.value))) {
    throw TrainingError("non-finite loss in batch " + std::to_string(batch_id));
  }
  auto grads = GradientBundle<Scalar>::zeros_like(net);
  grads.loss = loss.value;
  nn::backward(net, pass, loss.d_logits, grads);
  return grads;
}

/// Loss value only, for finite-difference checks and monitoring.
template <typename Scalar>
Scalar loss_value(const DenseNet<Scalar>& net, const MatrixX<Scalar>& inputs,
                  const LossSpec<Scalar>& spec) {
  return evaluate_logit_loss(logits(net, inputs), spec).value;
}

}  // namespace nlvos::nn
