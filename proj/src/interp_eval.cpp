#include "commod/interp_eval.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include "commod/error.hpp"
#include "commod/metrics.hpp"
#include "commod/tabular.hpp"

namespace commod::interp {

double DecisionTree::predict_row(std::span<const double> x) const {
  std::size_t at = 0;
  while (!nodes[at].leaf) at = x[nodes[at].feature] <= nodes[at].threshold ? nodes[at].left : nodes[at].right;
  return nodes[at].value;
}

std::vector<double> DecisionTree::predict(const Mat& X) const {
  std::vector<double> out(X.rows);
  for (std::size_t i = 0; i < X.rows; ++i) out[i] = predict_row(X.row(i));
  return out;
}

int DecisionTree::depth() const {
  std::function<int(std::size_t)> rec = [&](std::size_t at) -> int {
    if (nodes[at].leaf) return 0;
    return 1 + std::max(rec(nodes[at].left), rec(nodes[at].right));
  };
  return nodes.empty() ? 0 : rec(0);
}

namespace {

// Classification accumulates (count0, count1); regression (sum, sum of squares).
struct Stats {
  double n = 0, a = 0, b = 0;
  void add(double t, bool regression) {
    n += 1;
    if (regression) {
      a += t;
      b += t * t;
    } else {
      (t > 0.5 ? b : a) += 1;
    }
  }
  // n * impurity
  double cost(bool regression) const {
    if (n == 0) return 0.0;
    if (regression) return std::max(0.0, b - a * a / n);
    return n - (a * a + b * b) / n;
  }
};

class TreeBuilder {
 public:
  TreeBuilder(const Mat& X, std::span<const double> target, bool regression, int max_depth, std::uint64_t seed)
      : X_(X), t_(target), regression_(regression), max_depth_(max_depth) {
    feature_order_ = tabular::permutation(X.cols, seed);
  }

  DecisionTree build() {
    DecisionTree tree;
    tree.max_depth = max_depth_;
    std::vector<std::size_t> idx(X_.rows);
    std::iota(idx.begin(), idx.end(), 0);
    grow(tree, idx, 0);
    return tree;
  }

 private:
  bool pure(const std::vector<std::size_t>& idx) const {
    for (std::size_t i : idx) {
      if (t_[i] != t_[idx.front()]) return false;
    }
    return true;
  }

  std::size_t grow(DecisionTree& tree, const std::vector<std::size_t>& idx, int depth) {
    const std::size_t id = tree.nodes.size();
    tree.nodes.emplace_back();
    Stats st;
    for (std::size_t i : idx) st.add(t_[i], regression_);
    {
      auto& node = tree.nodes[id];
      if (regression_) {
        node.value = st.n > 0 ? st.a / st.n : 0.0;
      } else {
        node.count0 = static_cast<std::size_t>(st.a);
        node.count1 = static_cast<std::size_t>(st.b);
        node.value = node.count1 > node.count0 ? 1.0 : 0.0;
      }
    }
    if (depth >= max_depth_ || idx.size() < 2 || pure(idx)) return id;

    bool found = false;
    double best_cost = 0.0, best_thr = 0.0;
    std::size_t best_feature = 0;
    std::vector<std::size_t> sorted = idx;
    for (std::size_t f : feature_order_) {
      std::stable_sort(sorted.begin(), sorted.end(), [&](std::size_t p, std::size_t q) { return X_(p, f) < X_(q, f); });
      Stats left, right = st;
      for (std::size_t j = 0; j + 1 < sorted.size(); ++j) {
        const double tj = t_[sorted[j]];
        left.add(tj, regression_);
        if (regression_) {
          right.n -= 1;
          right.a -= tj;
          right.b -= tj * tj;
        } else {
          right.n -= 1;
          (tj > 0.5 ? right.b : right.a) -= 1;
        }
        const double lo = X_(sorted[j], f), hi = X_(sorted[j + 1], f);
        if (!(lo < hi)) continue;
        const double cost = left.cost(regression_) + right.cost(regression_);
        if (!found || cost < best_cost) {
          found = true;
          best_cost = cost;
          best_feature = f;
          double mid = lo + (hi - lo) / 2.0;
          if (!(mid < hi)) mid = lo;
          best_thr = mid;
        }
      }
    }
    if (!found) return id;
    std::vector<std::size_t> li, ri;
    for (std::size_t i : idx) (X_(i, best_feature) <= best_thr ? li : ri).push_back(i);
    const std::size_t l = grow(tree, li, depth + 1);
    const std::size_t r = grow(tree, ri, depth + 1);
    auto& node = tree.nodes[id];
    node.leaf = false;
    node.feature = best_feature;
    node.threshold = best_thr;
    node.left = l;
    node.right = r;
    return id;
  }

  const Mat& X_;
  std::span<const double> t_;
  bool regression_;
  int max_depth_;
  std::vector<std::size_t> feature_order_;
};

}  // namespace

DecisionTree fit_tree(const Mat& X, std::span<const int> labels, int max_depth, std::uint64_t seed) {
  if (labels.size() != X.rows) throw Error("fit_tree: labels do not match rows");
  if (X.rows < 2) throw Error("fit_tree: need at least 2 rows");
  if (max_depth < 1) throw Error("fit_tree: max_depth must be at least 1");
  std::vector<double> t(labels.begin(), labels.end());
  return TreeBuilder(X, t, false, max_depth, seed).build();
}

DecisionTree fit_regression_tree(const Mat& X, std::span<const double> target, int max_depth, std::uint64_t seed) {
  if (target.size() != X.rows) throw Error("fit_regression_tree: target does not match rows");
  if (X.rows < 2) throw Error("fit_regression_tree: need at least 2 rows");
  if (max_depth < 1) throw Error("fit_regression_tree: max_depth must be at least 1");
  return TreeBuilder(X, target, true, max_depth, seed).build();
}

double f1_score(std::span<const int> predicted, std::span<const int> labels) {
  if (predicted.size() != labels.size()) throw Error("f1_score: length mismatch");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (predicted[i] == 1 && labels[i] == 1) ++tp;
    else if (predicted[i] == 1) ++fp;
    else if (labels[i] == 1) ++fn;
  }
  if (tp + fp + fn == 0) return 1.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

double tree_f1(const DecisionTree& tree, const Mat& X, std::span<const int> labels) {
  const auto p = tree.predict(X);
  std::vector<int> yhat(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) yhat[i] = p[i] > 0.5 ? 1 : 0;
  return f1_score(yhat, labels);
}

std::vector<LocalityRow> locality_curve(const std::vector<ChangeModel>& models, const Mat& X,
                                        const std::vector<int>& depths, const LocalityOptions& options) {
  if (options.seeds < 1) throw Error("locality_curve: need at least one seed");
  const std::size_t n = X.rows;
  std::vector<std::vector<int>> changes(models.size());
  for (std::size_t m = 0; m < models.size(); ++m) {
    const auto& mod = models[m];
    if (mod.yhat_f.size() != n || mod.yhat_g.size() != n) {
      throw Error("locality_curve: predictions for '" + mod.name + "' do not match the rows");
    }
    changes[m].resize(n);
    for (std::size_t i = 0; i < n; ++i) changes[m][i] = mod.yhat_f[i] != mod.yhat_g[i] ? 1 : 0;
  }
  const std::size_t S = static_cast<std::size_t>(options.seeds);
  std::vector<std::vector<std::size_t>> samples(S);
  for (std::size_t k = 0; k < S; ++k) {
    auto& rows = samples[k];
    rows.resize(n);
    if (options.bootstrap) {
      std::mt19937_64 rng(options.base_seed * 1000003ULL + k);
      for (auto& r : rows) r = static_cast<std::size_t>(rng() % n);
    } else {
      std::iota(rows.begin(), rows.end(), 0);
    }
  }

  const std::size_t tasks = models.size() * depths.size() * S;
  std::vector<double> f1(tasks, 0.0);
  auto run = [&](std::size_t t) {
    const std::size_t k = t % S;
    const std::size_t d = (t / S) % depths.size();
    const std::size_t m = t / (S * depths.size());
    const Mat Xb = X.select_rows(samples[k]);
    std::vector<int> lb(n);
    for (std::size_t i = 0; i < n; ++i) lb[i] = changes[m][samples[k][i]];
    const auto tree = fit_tree(Xb, lb, depths[d], options.base_seed + k);
    f1[t] = tree_f1(tree, X, changes[m]);
  };
  if (options.exec == kernels::Exec::parallel) {
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t t = 0; t < static_cast<std::int64_t>(tasks); ++t) run(static_cast<std::size_t>(t));
  } else {
    for (std::size_t t = 0; t < tasks; ++t) run(t);
  }

  std::vector<LocalityRow> rows;
  for (std::size_t m = 0; m < models.size(); ++m) {
    const bool degenerate = std::none_of(changes[m].begin(), changes[m].end(), [](int c) { return c == 1; });
    for (std::size_t d = 0; d < depths.size(); ++d) {
      double mean = 0.0;
      for (std::size_t k = 0; k < S; ++k) mean += f1[(m * depths.size() + d) * S + k];
      mean /= static_cast<double>(S);
      double var = 0.0;
      for (std::size_t k = 0; k < S; ++k) {
        const double e = f1[(m * depths.size() + d) * S + k] - mean;
        var += e * e;
      }
      rows.push_back({models[m].name, depths[d], mean, std::sqrt(var / static_cast<double>(S)), degenerate});
    }
  }
  return rows;
}

namespace {

std::vector<int> rebuild(std::span<const double> flogit, std::span<const double> signal, SignalKind kind) {
  std::vector<int> yhat(flogit.size());
  for (std::size_t i = 0; i < flogit.size(); ++i) {
    const double z = kind == SignalKind::ratio_deviation ? (1.0 + signal[i]) * flogit[i] : flogit[i] + signal[i];
    yhat[i] = z > 0.0 ? 1 : 0;
  }
  return yhat;
}

}  // namespace

std::vector<PosthocRow> posthoc_compare(const Mat& X, std::span<const double> flogit, std::span<const int> s,
                                        std::span<const double> signal, SignalKind kind,
                                        const std::vector<int>& depths) {
  if (flogit.size() != X.rows || s.size() != X.rows || signal.size() != X.rows) {
    throw Error("posthoc_compare: inputs do not match the rows");
  }
  const std::vector<double> zero(X.rows, 0.0);
  const double base = metrics::p_rule(rebuild(flogit, zero, kind), s);
  const double self = metrics::p_rule(rebuild(flogit, signal, kind), s);
  std::vector<PosthocRow> out;
  for (int d : depths) {
    const auto tree = fit_regression_tree(X, signal, d);
    const auto approx = tree.predict(X);
    out.push_back({d, metrics::p_rule(rebuild(flogit, approx, kind), s), self, base});
  }
  return out;
}

std::vector<PosthocRow> posthoc_compare(const debias::TrainedCommod& trained, const Mat& X,
                                        std::span<const double> flogit, std::span<const int> s,
                                        const std::vector<int>& depths) {
  auto r = trained.ratio_net.ratios(X, flogit);
  for (double& v : r) v -= 1.0;
  return posthoc_compare(X, flogit, s, r, SignalKind::ratio_deviation, depths);
}

void SegmentGrid::validate() const {
  for (const auto* e : {&fairness_edges, &accuracy_edges}) {
    if (!((*e)[0] < (*e)[1] && (*e)[1] < (*e)[2])) throw Error("segment grid '" + name + "': edges must be strictly increasing");
  }
}

Segment segment_assign(double fairness, double accuracy, const SegmentGrid& grid) {
  Segment out;
  const auto& a = grid.accuracy_edges;
  out.acc_quartile = 1 + (accuracy >= a[0]) + (accuracy >= a[1]) + (accuracy >= a[2]);
  const auto& f = grid.fairness_edges;
  if (grid.orientation == Orientation::higher_fair_better) {
    out.fair_quartile = 1 + (fairness >= f[0]) + (fairness >= f[1]) + (fairness >= f[2]);
  } else {
    out.fair_quartile = 1 + (fairness <= f[2]) + (fairness <= f[1]) + (fairness <= f[0]);
  }
  return out;
}

SegmentGrid builtin_grid(const std::string& name) {
  if (name == "law_dp") return {name, {0.5587, 0.7212, 0.8719}, {0.6709, 0.7294, 0.7550}, Orientation::higher_fair_better};
  if (name == "law_eo") return {name, {0.1503, 0.2415, 0.3429}, {0.7230, 0.7458, 0.7577}, Orientation::lower_fair_better};
  if (name == "compas_dp") return {name, {0.7345, 0.7695, 0.8058}, {0.6242, 0.6391, 0.6537}, Orientation::higher_fair_better};
  if (name == "compas_eo") return {name, {0.1869, 0.2079, 0.2198}, {0.6242, 0.6391, 0.6537}, Orientation::lower_fair_better};
  throw Error("unknown segment grid '" + name + "'");
}

std::vector<std::string> builtin_grid_names() { return {"law_dp", "law_eo", "compas_dp", "compas_eo"}; }

namespace {

std::array<double, 3> quartile_edges(std::span<const double> values) {
  if (values.empty()) throw Error("grid_from_results: no results");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  std::array<double, 3> e{};
  for (int q = 1; q <= 3; ++q) {
    const double pos = 0.25 * q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    e[q - 1] = v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  }
  return e;
}

}  // namespace

SegmentGrid grid_from_results(std::span<const double> fairness, std::span<const double> accuracy,
                              Orientation orientation, const std::string& name) {
  SegmentGrid g{name, quartile_edges(fairness), quartile_edges(accuracy), orientation};
  g.validate();
  return g;
}

}  // namespace commod::interp
