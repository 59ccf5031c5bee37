#include "commod/debias.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "commod/error.hpp"
#include "commod/log.hpp"
#include "commod/mathutil.hpp"

namespace commod::debias {

std::string to_string(FairnessMode m) { return m == FairnessMode::dp ? "dp" : "eo"; }

FairnessMode fairness_mode_from_string(const std::string& s) {
  if (s == "dp" || s == "DP") return FairnessMode::dp;
  if (s == "eo" || s == "EO") return FairnessMode::eo;
  throw Error("unknown fairness mode '" + s + "' (expected dp or eo)");
}

ConceptRatioNet::ConceptRatioNet(std::size_t concepts, std::size_t feature_dim, bool include_flogit_input)
    : k_(concepts), d_(feature_dim), include_flogit_(include_flogit_input) {
  if (k_ == 0) throw Error("ConceptRatioNet: need at least one concept");
  if (d_ == 0) throw Error("ConceptRatioNet: need at least one feature");
  params_.assign(k_ * input_dim() + k_ + 1, 0.0);
}

ConceptRatioNet ConceptRatioNet::identity_start(std::size_t concepts, std::size_t feature_dim,
                                                bool include_flogit_input, std::uint64_t seed) {
  ConceptRatioNet net(concepts, feature_dim, include_flogit_input);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1e-2, 1e-2);
  for (double& w : net.mutable_W()) w = dist(rng);
  net.mutable_v_bias() = 1.0;
  return net;
}

Mat ConceptRatioNet::concept_matrix() const {
  Mat W(k_, input_dim());
  std::copy(params_.begin(), params_.begin() + static_cast<std::ptrdiff_t>(k_ * input_dim()),
            W.data.begin());
  return W;
}

double ConceptRatioNet::ratio(std::span<const double> x) const {
  if (x.size() != input_dim()) {
    throw Error("ratio: dimension mismatch, expected " + std::to_string(input_dim()) + " inputs, got " +
                std::to_string(x.size()));
  }
  const auto w = W();
  const auto head = v();
  double r = v_bias();
  for (std::size_t c = 0; c < k_; ++c) {
    double cval = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) cval += w[c * x.size() + j] * x[j];
    r += head[c] * cval;
  }
  return r;
}

Mat ConceptRatioNet::bottleneck_input(const Mat& X, std::span<const double> flogit) const {
  if (X.cols != d_) {
    throw Error("ratio: dimension mismatch, expected " + std::to_string(d_) + " features, got " +
                std::to_string(X.cols));
  }
  if (!include_flogit_) return X;
  if (flogit.size() != X.rows) throw Error("ratio: f_logit column length mismatch");
  Mat out(X.rows, d_ + 1);
  for (std::size_t i = 0; i < X.rows; ++i) {
    const auto src = X.row(i);
    auto dst = out.row(i);
    std::copy(src.begin(), src.end(), dst.begin());
    dst[d_] = flogit[i];
  }
  return out;
}

std::vector<double> ConceptRatioNet::ratios(const Mat& X, std::span<const double> flogit) const {
  const Mat input = bottleneck_input(X, flogit);
  std::vector<double> r(input.rows);
  for (std::size_t i = 0; i < input.rows; ++i) r[i] = ratio(input.row(i));
  return r;
}

double debiased_score(double r, double flogit) { return sigmoid(r * flogit); }

Adversary Adversary::make(FairnessMode mode, std::size_t hidden, std::uint64_t seed) {
  Adversary a;
  a.mode = mode;
  const std::size_t in = mode == FairnessMode::dp ? 1 : 2;
  a.net = net::DenseNet::glorot({{in, hidden, net::Activation::relu}, {hidden, 1, net::Activation::identity}},
                                seed);
  return a;
}

Mat Adversary::inputs(std::span<const double> z, std::span<const int> y) const {
  Mat A(z.size(), input_width());
  for (std::size_t i = 0; i < z.size(); ++i) {
    A(i, 0) = z[i];
    if (mode == FairnessMode::eo) A(i, 1) = static_cast<double>(y[i]);
  }
  return A;
}

std::vector<double> Adversary::predict(std::span<const double> z, std::span<const int> y) const {
  const Mat out = net::forward(net, inputs(z, y));
  std::vector<double> p(out.rows);
  for (std::size_t i = 0; i < out.rows; ++i) p[i] = sigmoid(out(i, 0));
  return p;
}

ConceptReport explain(const ConceptRatioNet& net, const std::vector<std::string>& feature_names,
                      double eps) {
  std::vector<std::string> names = feature_names;
  if (net.include_flogit_input()) names.push_back("f_logit");
  if (names.size() != net.input_dim()) throw Error("explain: feature name count does not match the network");
  ConceptReport report;
  report.v_bias = net.v_bias();
  report.eps = eps;
  for (std::size_t c = 0; c < net.concepts(); ++c) {
    ConceptExplanation e;
    e.index = c;
    e.head_weight = net.v()[c];
    e.direction = e.head_weight > 0   ? "contributes positively to changes"
                  : e.head_weight < 0 ? "contributes negatively to changes"
                                      : "does not contribute";
    const auto row = net.concept_row(c);
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (std::abs(row[j]) > eps) e.features.push_back({names[j], row[j]});
    }
    std::stable_sort(e.features.begin(), e.features.end(), [](const FeatureWeight& a, const FeatureWeight& b) {
      return std::abs(a.weight) > std::abs(b.weight);
    });
    e.empty = e.features.empty();
    if (e.empty) {
      log::warn("explain: concept " + std::to_string(c) + " has no weight above " + std::to_string(eps));
    }
    report.concepts.push_back(std::move(e));
  }
  return report;
}

}  // namespace commod::debias
