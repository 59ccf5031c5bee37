#include "commod/netcore.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "commod/error.hpp"
#include "commod/mathutil.hpp"

namespace commod::net {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
  }
  return "identity";
}

Activation activation_from_string(const std::string& name) {
  if (name == "identity") return Activation::identity;
  if (name == "relu") return Activation::relu;
  if (name == "sigmoid") return Activation::sigmoid;
  throw Error("unknown activation '" + name + "'");
}

DenseNet::DenseNet(std::vector<LayerShape> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw Error("DenseNet: at least one layer required");
  std::size_t offset = 0;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& s = layers_[l];
    if (s.in == 0 || s.out == 0) throw Error("DenseNet: zero-width layer");
    if (l > 0 && layers_[l - 1].out != s.in) {
      throw Error("DenseNet: layer " + std::to_string(l) + " input width " + std::to_string(s.in) +
                  " does not chain with previous output " + std::to_string(layers_[l - 1].out));
    }
    offsets_.push_back(offset);
    offset += s.in * s.out + s.out;
  }
  params_.assign(offset, 0.0);
}

DenseNet DenseNet::glorot(std::vector<LayerShape> layers, std::uint64_t seed) {
  DenseNet net(std::move(layers));
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const auto& s = net.layer(l);
    const double limit = std::sqrt(6.0 / static_cast<double>(s.in + s.out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (double& w : net.mutable_weight(l)) w = dist(rng);
  }
  return net;
}

std::span<const double> DenseNet::weight(std::size_t l) const {
  return {params_.data() + weight_offset(l), layers_[l].in * layers_[l].out};
}
std::span<const double> DenseNet::bias(std::size_t l) const {
  return {params_.data() + bias_offset(l), layers_[l].out};
}
std::span<double> DenseNet::mutable_weight(std::size_t l) {
  ++version_;
  return {params_.data() + weight_offset(l), layers_[l].in * layers_[l].out};
}
std::span<double> DenseNet::mutable_bias(std::size_t l) {
  ++version_;
  return {params_.data() + bias_offset(l), layers_[l].out};
}

namespace {

void activate(Activation a, Mat& m) {
  switch (a) {
    case Activation::identity: break;
    case Activation::relu:
      for (double& v : m.data) v = v > 0.0 ? v : 0.0;
      break;
    case Activation::sigmoid:
      for (double& v : m.data) v = sigmoid(v);
      break;
  }
}

}  // namespace

Mat forward(const DenseNet& net, const Mat& X, ForwardCache* cache, kernels::Exec exec) {
  if (net.num_layers() == 0) throw Error("forward: empty network");
  if (X.cols != net.input_width()) {
    throw Error("forward: dimension mismatch, input has " + std::to_string(X.cols) +
                " columns but network expects " + std::to_string(net.input_width()));
  }
  if (cache) {
    cache->net = &net;
    cache->version = net.version();
    cache->inputs.clear();
    cache->outputs.clear();
  }
  Mat current = X;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    Mat out;
    kernels::affine(current, net.weight(l), net.bias(l), out, exec);
    activate(net.layer(l).activation, out);
    if (cache) cache->inputs.push_back(std::move(current));
    current = std::move(out);
    if (cache) cache->outputs.push_back(current);
  }
  return current;
}

Gradients backward(const DenseNet& net, const ForwardCache& cache, const Mat& upstream,
                   kernels::Exec exec) {
  if (cache.net != &net || cache.version != net.version() ||
      cache.inputs.size() != net.num_layers()) {
    throw Error("backward: stale or mismatched forward cache");
  }
  const Mat& last = cache.outputs.back();
  if (upstream.rows != last.rows || upstream.cols != last.cols) {
    throw Error("backward: upstream gradient shape does not match network output");
  }
  Gradients grads;
  grads.params.assign(net.param_count(), 0.0);
  Mat delta = upstream;
  for (std::size_t li = net.num_layers(); li-- > 0;) {
    const auto& shape = net.layer(li);
    const Mat& out = cache.outputs[li];
    switch (shape.activation) {
      case Activation::identity: break;
      case Activation::relu:
        for (std::size_t k = 0; k < delta.data.size(); ++k) {
          if (out.data[k] <= 0.0) delta.data[k] = 0.0;
        }
        break;
      case Activation::sigmoid:
        for (std::size_t k = 0; k < delta.data.size(); ++k) {
          const double o = out.data[k];
          delta.data[k] *= o * (1.0 - o);
        }
        break;
    }
    std::span<double> dW(grads.params.data() + net.weight_offset(li), shape.in * shape.out);
    std::span<double> db(grads.params.data() + net.bias_offset(li), shape.out);
    kernels::affine_grad_params(delta, cache.inputs[li], dW, db, exec);
    Mat next;
    kernels::affine_grad_input(delta, net.weight(li), shape.in, next, exec);
    delta = std::move(next);
  }
  grads.input = std::move(delta);
  return grads;
}

double grad_check(const LossWithGrad& loss, std::span<const double> params, double step) {
  if (!(step > 0.0)) throw Error("grad_check: step must be positive");
  std::vector<double> p(params.begin(), params.end());
  std::vector<double> analytic;
  const double base = loss(p, &analytic);
  if (!std::isfinite(base)) throw Error("grad_check: non-finite loss");
  if (analytic.size() != p.size()) throw Error("grad_check: gradient size mismatch");
  std::vector<double> numeric(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double saved = p[i];
    p[i] = saved + step;
    const double up = loss(p, nullptr);
    p[i] = saved - step;
    const double down = loss(p, nullptr);
    p[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) throw Error("grad_check: non-finite loss");
    numeric[i] = (up - down) / (2.0 * step);
  }
  // discrepancies are measured against the gradient's scale, so near-zero
  // entries (dead relu units) do not turn difference noise into large ratios
  double scale = 1e-12;
  for (std::size_t i = 0; i < p.size(); ++i) scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
  double worst = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / scale);
  return worst;
}

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads) {
  if (params.size() != grads.size()) throw Error("adam_step: shape mismatch");
  for (double g : grads) {
    if (!std::isfinite(g)) throw Error("adam_step: non-finite gradient");
  }
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size()) throw Error("adam_step: moment shape mismatch");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
  }
}

Optimizer::Optimizer(OptimizerKind kind, double learning_rate) : kind_(kind) {
  adam_.learning_rate = learning_rate;
}

void Optimizer::step(std::span<double> params, std::span<const double> grads) {
  if (kind_ == OptimizerKind::adam) {
    adam_step(adam_, params, grads);
    return;
  }
  if (params.size() != grads.size()) throw Error("sgd step: shape mismatch");
  for (double g : grads) {
    if (!std::isfinite(g)) throw Error("sgd step: non-finite gradient");
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= adam_.learning_rate * grads[i];
  ++adam_.step;
}

}  // namespace commod::net
