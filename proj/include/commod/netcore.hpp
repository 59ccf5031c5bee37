#pragma once

// Minimal dense-network substrate: parameters live in one flat array per
// network so the optimizer and the finite-difference checker can treat every
// model uniformly.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "commod/kernels.hpp"
#include "commod/mat.hpp"

namespace commod::net {

enum class Activation { identity, relu, sigmoid };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

struct LayerShape {
  std::size_t in = 0;
  std::size_t out = 0;
  Activation activation = Activation::identity;
};

class DenseNet {
 public:
  DenseNet() = default;
  /// All parameters zero. Throws if consecutive layer widths do not chain.
  explicit DenseNet(std::vector<LayerShape> layers);

  /// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
  static DenseNet glorot(std::vector<LayerShape> layers, std::uint64_t seed);

  std::size_t num_layers() const { return layers_.size(); }
  const LayerShape& layer(std::size_t l) const { return layers_[l]; }
  const std::vector<LayerShape>& layers() const { return layers_; }
  std::size_t input_width() const { return layers_.front().in; }
  std::size_t output_width() const { return layers_.back().out; }
  std::size_t param_count() const { return params_.size(); }

  std::span<const double> params() const { return params_; }
  /// Mutable access bumps the version, invalidating outstanding caches.
  std::span<double> mutable_params() {
    ++version_;
    return params_;
  }
  std::uint64_t version() const { return version_; }

  // Views into the flat parameter array. Weights are row-major (out x in).
  std::span<const double> weight(std::size_t l) const;
  std::span<const double> bias(std::size_t l) const;
  std::span<double> mutable_weight(std::size_t l);
  std::span<double> mutable_bias(std::size_t l);

  std::size_t weight_offset(std::size_t l) const { return offsets_[l]; }
  std::size_t bias_offset(std::size_t l) const { return offsets_[l] + layers_[l].in * layers_[l].out; }

 private:
  std::vector<LayerShape> layers_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
  std::uint64_t version_ = 0;
};

struct ForwardCache {
  const DenseNet* net = nullptr;
  std::uint64_t version = 0;
  std::vector<Mat> inputs;  // input to each layer
  std::vector<Mat> outputs; // post-activation output of each layer
};

/// Runs the network on every row of X. Fills `cache` when given.
Mat forward(const DenseNet& net, const Mat& X, ForwardCache* cache = nullptr,
            kernels::Exec exec = kernels::Exec::parallel);

struct Gradients {
  std::vector<double> params;  // same layout as DenseNet::params()
  Mat input;                   // d loss / d X
};

/// Backpropagates `upstream` (d loss / d output) through the cached forward.
Gradients backward(const DenseNet& net, const ForwardCache& cache, const Mat& upstream,
                   kernels::Exec exec = kernels::Exec::parallel);

/// Loss callback for gradient checking: returns the loss at `params` and, when
/// `grad` is non-null, writes the analytic gradient into it.
using LossWithGrad = std::function<double(std::span<const double> params, std::vector<double>* grad)>;

/// Max over parameters of |analytic - central difference|, divided by the largest
/// entry magnitude in either gradient.
double grad_check(const LossWithGrad& loss, std::span<const double> params, double step = 1e-5);

struct AdamState {
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;
};

/// Bias-corrected adaptive-moment update. Rejects non-finite gradients
/// without touching params or state.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads);

enum class OptimizerKind { adam, sgd };

/// Adam or plain gradient descent behind one interface.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate);
  void step(std::span<double> params, std::span<const double> grads);
  OptimizerKind kind() const { return kind_; }
  const AdamState& adam() const { return adam_; }

 private:
  OptimizerKind kind_;
  AdamState adam_;
};

}  // namespace commod::net
