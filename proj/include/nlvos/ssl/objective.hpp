#pragma once

#include <cmath>
#include <string>

#include "nlvos/geometry/spade.hpp"
#include "nlvos/nn/propagation.hpp"
#include "nlvos/ssl/ssl.hpp"

namespace nlvos::ssl {

/// Everything one optimization step consumes, already augmented and mixed.
template <typename Scalar>
struct StepBatch {
  MatrixX<Scalar> labeled_inputs;     // mixed, input_dim x nl
  MatrixX<Scalar> labeled_targets;    // K x nl
  MatrixX<Scalar> unlabeled_inputs;   // mixed, input_dim x nu
  MatrixX<Scalar> unlabeled_targets;  // K x nu
  MatrixX<Scalar> contrastive_views;  // input_dim x 2N, adjacent pairs
  MatrixX<Scalar> clean_inputs;       // support samples for L_spade
  MatrixX<Scalar> outliers;           // feature_dim x m virtual outliers
};

struct ObjectiveOptions {
  LossWeights weights;
  double energy_temperature = 1.0;
  bool use_contrastive = true;
  bool use_spade = true;
};

struct LossBreakdown {
  double l_x = 0, l_u = 0, l_reg = 0;
  double ssl = 0, cl = 0, spade = 0, total = 0;
  double mean_clean_energy = 0, mean_outlier_energy = 0;
  bool spade_active = false;
};

/// Evaluates L_total on one step batch and, when `grads` is given, adds its
/// exact gradient. Inactive terms (disabled, or no views/outliers/clean
/// samples) contribute 0.
template <typename Scalar>
LossBreakdown total_objective(const nn::DenseNet<Scalar>& net, const StepBatch<Scalar>& batch,
                              const ObjectiveOptions& opt, nn::GradientBundle<Scalar>* grads = nullptr) {
  LossBreakdown out;
  const Eigen::Index nl = batch.labeled_inputs.cols();
  const Eigen::Index nu = batch.unlabeled_inputs.cols();
  MatrixX<Scalar> mixed(net.input_dim(), nl + nu);
  mixed << batch.labeled_inputs, batch.unlabeled_inputs;
  const auto pass = nn::trace_forward(net, mixed);
  const auto terms = ssl_loss<Scalar>(pass.logits().leftCols(nl), batch.labeled_targets,
                                      pass.logits().rightCols(nu), batch.unlabeled_targets, opt.weights);
  out.l_x = static_cast<double>(terms.l_x);
  out.l_u = static_cast<double>(terms.l_u);
  out.l_reg = static_cast<double>(terms.l_reg);
  out.ssl = static_cast<double>(terms.value);
  if (grads) {
    MatrixX<Scalar> d(net.num_classes(), nl + nu);
    d << terms.d_labeled_logits, terms.d_unlabeled_logits;
    nn::backward(net, pass, d, *grads);
  }

  if (opt.use_contrastive && batch.contrastive_views.cols() >= 2) {
    const auto views = nn::trace_forward(net, batch.contrastive_views, true);
    const auto cl = contrastive_loss<Scalar>(views.projection,
                                             static_cast<Scalar>(opt.weights.contrastive_temperature));
    out.cl = static_cast<double>(cl.value);
    if (grads) {
      nn::backward(net, views, MatrixX<Scalar>(), *grads,
                   MatrixX<Scalar>(static_cast<Scalar>(opt.weights.lambda_cl) * cl.d_projections));
    }
  }

  if (opt.use_spade && (batch.clean_inputs.cols() > 0 || batch.outliers.cols() > 0)) {
    const auto T = static_cast<Scalar>(opt.energy_temperature);
    const auto lambda = static_cast<Scalar>(opt.weights.lambda_spade);
    const auto clean = nn::trace_forward(net, batch.clean_inputs);
    const auto outl = nn::trace_head(net, batch.outliers);
    const auto ce = nn::energy_batch<Scalar>(clean.logits(), T);
    const auto oe = nn::energy_batch<Scalar>(outl.logits(), T);
    const auto sp = geometry::spade_from_energies<Scalar>(ce.values, oe.values);
    out.spade = static_cast<double>(sp.value);
    out.spade_active = true;
    if (ce.values.size() > 0) out.mean_clean_energy = static_cast<double>(ce.values.mean());
    if (oe.values.size() > 0) out.mean_outlier_energy = static_cast<double>(oe.values.mean());
    if (grads) {
      nn::backward(net, clean, MatrixX<Scalar>(lambda * ce.d_logits * sp.d_clean_energy.asDiagonal()), *grads);
      nn::backward(net, outl, MatrixX<Scalar>(lambda * oe.d_logits * sp.d_outlier_energy.asDiagonal()), *grads);
    }
  }

  out.total = total_loss(out.ssl, out.cl, out.spade, opt.weights);
  if (grads) grads->loss = static_cast<Scalar>(out.total);
  return out;
}

}  // namespace nlvos::ssl
