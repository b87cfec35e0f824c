#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nlvos/error.hpp"

namespace nlvos::nn {

enum class Activation { relu, identity };

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Fully connected layer y = act(W x + b). Batches are stored column-wise.
template <typename Scalar>
struct DenseLayer {
  MatrixX<Scalar> weights;  // out x in
  VectorX<Scalar> biases;   // out
  Activation activation = Activation::identity;

  Eigen::Index in_dim() const { return weights.cols(); }
  Eigen::Index out_dim() const { return weights.rows(); }
};

/// Widths of the three parts of a network: extractor h, classifier head f and
/// projection head g. The extractor ends in a ReLU; both heads are linear.
struct NetShape {
  int input_dim = 8;
  std::vector<int> hidden = {64, 64};  // extractor widths; last = feature dim
  int num_classes = 4;
  int projection_dim = 32;
};

/// Contiguous index range into the layer list.
struct LayerRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool empty() const { return begin == end; }
};

/// Feed-forward network split into extractor, classifier head and projector.
///
/// The layer list is stored flat; `classifier_begin` and `projector_begin`
/// mark the structural split. The projector may be empty, in which case
/// forward_projection is unavailable.
template <typename Scalar>
class DenseNet {
 public:
  using Layer = DenseLayer<Scalar>;
  using Matrix = MatrixX<Scalar>;
  using Vector = VectorX<Scalar>;

  DenseNet() = default;

  DenseNet(std::vector<Layer> extractor, std::vector<Layer> classifier,
           std::vector<Layer> projector = {}) {
    if (extractor.empty() || classifier.empty()) {
      throw StructuralError("network needs a non-empty extractor and classifier");
    }
    classifier_begin_ = extractor.size();
    projector_begin_ = classifier_begin_ + classifier.size();
    layers_.reserve(projector_begin_ + projector.size());
    for (auto* part : {&extractor, &classifier, &projector}) {
      for (auto& layer : *part) layers_.push_back(std::move(layer));
    }
    check_chain(extractor_range());
    check_chain(classifier_range());
    if (layers_[classifier_begin_].in_dim() != feature_dim()) {
      throw StructuralError("classifier input width does not match feature width");
    }
    if (!projector_range().empty()) {
      check_chain(projector_range());
      if (layers_[projector_begin_].in_dim() != feature_dim()) {
        throw StructuralError("projector input width does not match feature width");
      }
    }
  }

  /// Seeded initialization, every parameter ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  static DenseNet initialize(const NetShape& shape, std::uint64_t seed) {
    if (shape.input_dim < 1 || shape.hidden.empty() || shape.num_classes < 2) {
      throw StructuralError("invalid network shape");
    }
    std::mt19937_64 rng(seed);
    auto make = [&rng](int in, int out, Activation act) {
      Layer layer;
      layer.activation = act;
      layer.weights.resize(out, in);
      layer.biases.resize(out);
      const double bound = 1.0 / std::sqrt(static_cast<double>(in));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
        for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
          layer.weights(r, c) = static_cast<Scalar>(dist(rng));
        }
      }
      for (Eigen::Index r = 0; r < layer.biases.size(); ++r) {
        layer.biases(r) = static_cast<Scalar>(dist(rng));
      }
      return layer;
    };
    std::vector<Layer> extractor;
    int width = shape.input_dim;
    for (int h : shape.hidden) {
      extractor.push_back(make(width, h, Activation::relu));
      width = h;
    }
    std::vector<Layer> classifier{make(width, shape.num_classes, Activation::identity)};
    std::vector<Layer> projector;
    if (shape.projection_dim > 0) {
      projector.push_back(make(width, shape.projection_dim, Activation::identity));
    }
    return DenseNet(std::move(extractor), std::move(classifier), std::move(projector));
  }

  std::span<const Layer> layers() const { return layers_; }
  std::span<Layer> layers() { return layers_; }

  LayerRange extractor_range() const { return {0, classifier_begin_}; }
  LayerRange classifier_range() const { return {classifier_begin_, projector_begin_}; }
  LayerRange projector_range() const { return {projector_begin_, layers_.size()}; }
  bool has_projector() const { return !projector_range().empty(); }

  Eigen::Index input_dim() const { return layers_.front().in_dim(); }
  Eigen::Index feature_dim() const { return layers_[classifier_begin_ - 1].out_dim(); }
  Eigen::Index num_classes() const { return layers_[projector_begin_ - 1].out_dim(); }
  Eigen::Index projection_dim() const {
    return has_projector() ? layers_.back().out_dim() : 0;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.weights.size() + l.biases.size());
    return n;
  }

  /// Parameters in layer order, weights (column-major) before biases.
  Vector flat_parameters() const {
    Vector flat(static_cast<Eigen::Index>(parameter_count()));
    Eigen::Index at = 0;
    for (const auto& l : layers_) {
      flat.segment(at, l.weights.size()) = l.weights.reshaped();
      at += l.weights.size();
      flat.segment(at, l.biases.size()) = l.biases;
      at += l.biases.size();
    }
    return flat;
  }

  void set_flat_parameters(const Vector& flat) {
    if (flat.size() != static_cast<Eigen::Index>(parameter_count())) {
      throw StructuralError("flat parameter vector has the wrong length");
    }
    Eigen::Index at = 0;
    for (auto& l : layers_) {
      l.weights.reshaped() = flat.segment(at, l.weights.size());
      at += l.weights.size();
      l.biases = flat.segment(at, l.biases.size());
      at += l.biases.size();
    }
  }

 private:
  void check_chain(LayerRange range) const {
    for (std::size_t i = range.begin; i < range.end; ++i) {
      const auto& l = layers_[i];
      if (l.biases.size() != l.out_dim()) {
        throw StructuralError("bias length does not match layer output width");
      }
      if (i > range.begin && layers_[i - 1].out_dim() != l.in_dim()) {
        throw StructuralError("consecutive layer widths disagree at layer " + std::to_string(i));
      }
    }
  }

  std::vector<Layer> layers_;
  std::size_t classifier_begin_ = 0;
  std::size_t projector_begin_ = 0;
};

using DenseNetd = DenseNet<double>;

}  // namespace nlvos::nn
