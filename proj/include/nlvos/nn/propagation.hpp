#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <vector>

#include "nlvos/error.hpp"
#include "nlvos/nn/dense_net.hpp"

namespace nlvos::nn {

/// Per-parameter gradients mirroring a DenseNet, plus the loss they belong to.
template <typename Scalar>
struct GradientBundle {
  std::vector<MatrixX<Scalar>> weights;
  std::vector<VectorX<Scalar>> biases;
  Scalar loss = Scalar(0);

  static GradientBundle zeros_like(const DenseNet<Scalar>& net) {
    GradientBundle g;
    for (const auto& l : net.layers()) {
      g.weights.push_back(MatrixX<Scalar>::Zero(l.weights.rows(), l.weights.cols()));
      g.biases.push_back(VectorX<Scalar>::Zero(l.biases.size()));
    }
    return g;
  }

  bool matches(const DenseNet<Scalar>& net) const {
    const auto layers = net.layers();
    if (weights.size() != layers.size() || biases.size() != layers.size()) return false;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (weights[i].rows() != layers[i].weights.rows() ||
          weights[i].cols() != layers[i].weights.cols() ||
          biases[i].size() != layers[i].biases.size()) {
        return false;
      }
    }
    return true;
  }

  /// Same ordering as DenseNet::flat_parameters.
  VectorX<Scalar> flat() const {
    Eigen::Index n = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) n += weights[i].size() + biases[i].size();
    VectorX<Scalar> out(n);
    Eigen::Index at = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      out.segment(at, weights[i].size()) = weights[i].reshaped();
      at += weights[i].size();
      out.segment(at, biases[i].size()) = biases[i];
      at += biases[i].size();
    }
    return out;
  }

  GradientBundle& operator+=(const GradientBundle& other) {
    for (std::size_t i = 0; i < weights.size(); ++i) {
      weights[i] += other.weights[i];
      biases[i] += other.biases[i];
    }
    loss += other.loss;
    return *this;
  }
};

/// Activations recorded by a forward pass through a contiguous layer range.
template <typename Scalar>
struct StackTrace {
  std::vector<MatrixX<Scalar>> inputs;          // input to each layer
  std::vector<MatrixX<Scalar>> preactivations;  // W x + b of each layer
  MatrixX<Scalar> output;
};

namespace detail {

template <typename Scalar>
MatrixX<Scalar> apply_layer(const DenseLayer<Scalar>& layer, const MatrixX<Scalar>& x,
                            MatrixX<Scalar>* pre = nullptr) {
  MatrixX<Scalar> z = layer.weights * x;
  z.colwise() += layer.biases;
  if (pre) *pre = z;
  if (layer.activation == Activation::relu) z = z.cwiseMax(Scalar(0));
  return z;
}

}  // namespace detail

template <typename Scalar>
MatrixX<Scalar> run_stack(const DenseNet<Scalar>& net, LayerRange range, MatrixX<Scalar> x) {
  const auto layers = net.layers();
  for (std::size_t i = range.begin; i < range.end; ++i) {
    if (x.rows() != layers[i].in_dim()) {
      throw StructuralError("input width " + std::to_string(x.rows()) + " does not match layer " +
                            std::to_string(i) + " width " + std::to_string(layers[i].in_dim()));
    }
    x = detail::apply_layer(layers[i], x);
  }
  return x;
}

template <typename Scalar>
StackTrace<Scalar> trace_stack(const DenseNet<Scalar>& net, LayerRange range, MatrixX<Scalar> x) {
  const auto layers = net.layers();
  StackTrace<Scalar> trace;
  for (std::size_t i = range.begin; i < range.end; ++i) {
    if (x.rows() != layers[i].in_dim()) {
      throw StructuralError("input width does not match layer " + std::to_string(i));
    }
    trace.inputs.push_back(x);
    trace.preactivations.emplace_back();
    x = detail::apply_layer(layers[i], x, &trace.preactivations.back());
  }
  trace.output = std::move(x);
  return trace;
}

/// Accumulates parameter gradients for `range` into `grads` and returns the
/// gradient with respect to the stack input.
template <typename Scalar>
MatrixX<Scalar> backprop_stack(const DenseNet<Scalar>& net, LayerRange range,
                               const StackTrace<Scalar>& trace, MatrixX<Scalar> upstream,
                               GradientBundle<Scalar>& grads) {
  const auto layers = net.layers();
  for (std::size_t i = range.end; i-- > range.begin;) {
    const std::size_t local = i - range.begin;
    if (layers[i].activation == Activation::relu) {
      upstream = (trace.preactivations[local].array() > Scalar(0)).select(upstream, Scalar(0));
    }
    grads.weights[i].noalias() += upstream * trace.inputs[local].transpose();
    grads.biases[i] += upstream.rowwise().sum();
    upstream = layers[i].weights.transpose() * upstream;
  }
  return upstream;
}

/// Column-wise L2 normalization. Zero columns map to e1 and are flagged.
template <typename Scalar>
MatrixX<Scalar> normalize_columns(const MatrixX<Scalar>& u, VectorX<Scalar>& norms,
                                  std::vector<bool>* degenerate = nullptr) {
  MatrixX<Scalar> z(u.rows(), u.cols());
  norms = u.colwise().norm().transpose();
  if (degenerate) degenerate->assign(static_cast<std::size_t>(u.cols()), false);
  for (Eigen::Index c = 0; c < u.cols(); ++c) {
    if (norms(c) > Scalar(0)) {
      z.col(c) = u.col(c) / norms(c);
    } else {
      z.col(c).setZero();
      z(0, c) = Scalar(1);
      if (degenerate) (*degenerate)[static_cast<std::size_t>(c)] = true;
    }
  }
  return z;
}

// Single-sample entry points.

template <typename Scalar>
VectorX<Scalar> forward_features(const DenseNet<Scalar>& net, const VectorX<Scalar>& x) {
  if (x.size() != net.input_dim()) throw StructuralError("input dimension mismatch");
  return run_stack(net, net.extractor_range(), MatrixX<Scalar>(x)).col(0);
}

template <typename Scalar>
VectorX<Scalar> forward_logits(const DenseNet<Scalar>& net, const VectorX<Scalar>& x) {
  return run_stack(net, net.classifier_range(), MatrixX<Scalar>(forward_features(net, x))).col(0);
}

template <typename Scalar>
struct Projection {
  VectorX<Scalar> value;
  bool degenerate = false;
};

template <typename Scalar>
Projection<Scalar> project_unit(const VectorX<Scalar>& pre) {
  VectorX<Scalar> norms;
  std::vector<bool> degenerate;
  MatrixX<Scalar> z = normalize_columns(MatrixX<Scalar>(pre), norms, &degenerate);
  return {z.col(0), degenerate[0]};
}

template <typename Scalar>
Projection<Scalar> forward_projection(const DenseNet<Scalar>& net, const VectorX<Scalar>& x) {
  if (!net.has_projector()) throw StructuralError("network has no projection head");
  VectorX<Scalar> pre =
      run_stack(net, net.projector_range(), MatrixX<Scalar>(forward_features(net, x))).col(0);
  return project_unit(pre);
}

// Batch entry points; samples are columns.

template <typename Scalar>
MatrixX<Scalar> features(const DenseNet<Scalar>& net, const MatrixX<Scalar>& x) {
  return run_stack(net, net.extractor_range(), x);
}

template <typename Scalar>
MatrixX<Scalar> head_logits(const DenseNet<Scalar>& net, const MatrixX<Scalar>& feats) {
  return run_stack(net, net.classifier_range(), feats);
}

template <typename Scalar>
MatrixX<Scalar> logits(const DenseNet<Scalar>& net, const MatrixX<Scalar>& x) {
  return head_logits(net, features(net, x));
}

/// Full forward record for one batch, enough to backpropagate any combination
/// of logit, projection and feature gradients.
template <typename Scalar>
struct ForwardPass {
  StackTrace<Scalar> extractor;
  StackTrace<Scalar> classifier;
  std::optional<StackTrace<Scalar>> projector;
  MatrixX<Scalar> projection;  // unit columns
  VectorX<Scalar> projection_norms;
  bool head_only = false;

  const MatrixX<Scalar>& features() const { return extractor.output; }
  const MatrixX<Scalar>& logits() const { return classifier.output; }
  Eigen::Index batch_size() const { return classifier.output.cols(); }
};

template <typename Scalar>
ForwardPass<Scalar> trace_forward(const DenseNet<Scalar>& net, const MatrixX<Scalar>& x,
                                  bool with_projection = false) {
  ForwardPass<Scalar> pass;
  pass.extractor = trace_stack(net, net.extractor_range(), x);
  pass.classifier = trace_stack(net, net.classifier_range(), pass.extractor.output);
  if (with_projection) {
    if (!net.has_projector()) throw StructuralError("network has no projection head");
    pass.projector = trace_stack(net, net.projector_range(), pass.extractor.output);
    pass.projection = normalize_columns(pass.projector->output, pass.projection_norms);
  }
  return pass;
}

/// Classifier head applied directly to feature vectors (virtual outliers).
template <typename Scalar>
ForwardPass<Scalar> trace_head(const DenseNet<Scalar>& net, const MatrixX<Scalar>& feats) {
  ForwardPass<Scalar> pass;
  pass.head_only = true;
  pass.extractor.output = feats;
  pass.classifier = trace_stack(net, net.classifier_range(), feats);
  return pass;
}

/// Backpropagates upstream gradients into `grads`. Empty matrices mean "no
/// gradient from that output".
template <typename Scalar>
void backward(const DenseNet<Scalar>& net, const ForwardPass<Scalar>& pass,
              const MatrixX<Scalar>& d_logits, GradientBundle<Scalar>& grads,
              const MatrixX<Scalar>& d_projection = {}, const MatrixX<Scalar>& d_features = {}) {
  const Eigen::Index n = pass.batch_size();
  MatrixX<Scalar> d_feat = MatrixX<Scalar>::Zero(net.feature_dim(), n);
  if (d_logits.size() > 0) {
    d_feat += backprop_stack(net, net.classifier_range(), pass.classifier, d_logits, grads);
  }
  if (pass.head_only) return;
  if (d_projection.size() > 0) {
    if (!pass.projector) throw StructuralError("forward pass was traced without projection");
    // d(u/|u|)/du = (I - z z^T) / |u|
    MatrixX<Scalar> d_pre(d_projection.rows(), n);
    for (Eigen::Index c = 0; c < n; ++c) {
      const Scalar norm = pass.projection_norms(c);
      if (norm > Scalar(0)) {
        const auto z = pass.projection.col(c);
        d_pre.col(c) = (d_projection.col(c) - z * z.dot(d_projection.col(c))) / norm;
      } else {
        d_pre.col(c).setZero();
      }
    }
    d_feat += backprop_stack(net, net.projector_range(), *pass.projector, d_pre, grads);
  }
  if (d_features.size() > 0) d_feat += d_features;
  backprop_stack(net, net.extractor_range(), pass.extractor, std::move(d_feat), grads);
}

/// Momentum buffer of the optimizer, one entry per layer.
template <typename Scalar>
using Velocity = GradientBundle<Scalar>;

struct SgdOptions {
  double lr = 0.02;
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

/// v <- momentum * v + (g + wd * w);  w <- w - lr * v
template <typename Scalar>
void sgd_step(DenseNet<Scalar>& net, const GradientBundle<Scalar>& grads, const SgdOptions& opt,
              Velocity<Scalar>& velocity) {
  if (!(opt.lr > 0)) throw ParameterError("learning rate must be positive");
  if (!grads.matches(net)) throw StructuralError("gradient shapes do not match network");
  if (!velocity.matches(net)) velocity = Velocity<Scalar>::zeros_like(net);
  auto layers = net.layers();
  const auto mu = static_cast<Scalar>(opt.momentum);
  const auto wd = static_cast<Scalar>(opt.weight_decay);
  const auto lr = static_cast<Scalar>(opt.lr);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    velocity.weights[i] = mu * velocity.weights[i] + grads.weights[i] + wd * layers[i].weights;
    velocity.biases[i] = mu * velocity.biases[i] + grads.biases[i] + wd * layers[i].biases;
    layers[i].weights -= lr * velocity.weights[i];
    layers[i].biases -= lr * velocity.biases[i];
  }
}

}  // namespace nlvos::nn
