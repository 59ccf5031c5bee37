#include <doctest.h>

#include <cmath>
#include <random>

#include "commod/error.hpp"
#include "commod/interp_eval.hpp"
#include "commod/metrics.hpp"

using namespace commod;
using namespace commod::interp;

namespace {

Mat uniform_mat(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Mat X(n, d);
  for (double& v : X.data) v = u(rng);
  return X;
}

double training_accuracy(const DecisionTree& t, const Mat& X, const std::vector<int>& y) {
  const auto p = t.predict(X);
  double ok = 0;
  for (std::size_t i = 0; i < y.size(); ++i) ok += (p[i] > 0.5 ? 1 : 0) == y[i];
  return ok / static_cast<double>(y.size());
}

}  // namespace

TEST_CASE("axis-aligned labels need one split") {
  const Mat X = uniform_mat(200, 3, 1);
  std::vector<int> y(200);
  for (std::size_t i = 0; i < 200; ++i) y[i] = X(i, 0) > 0 ? 1 : 0;
  const auto t = fit_tree(X, y, 3);
  CHECK(t.depth() == 1);
  CHECK(tree_f1(t, X, y) == 1.0);
}

TEST_CASE("XOR needs depth two") {
  const Mat X = Mat::from_rows({{0, 0}, {0, 1}, {1, 0}, {1, 1}});
  const std::vector<int> y{0, 1, 1, 0};
  const auto t1 = fit_tree(X, y, 1);
  CHECK(tree_f1(t1, X, y) <= 2.0 / 3.0 + 1e-12);
  const auto t2 = fit_tree(X, y, 2);
  CHECK(tree_f1(t2, X, y) == 1.0);
}

TEST_CASE("constant labels give a single leaf") {
  const Mat X = uniform_mat(20, 2, 2);
  const std::vector<int> y(20, 0);
  const auto t = fit_tree(X, y, 4);
  CHECK(t.nodes.size() == 1);
  CHECK(t.nodes[0].value == 0.0);
}

TEST_CASE("tree invariants: depth bound, leaf counts, monotone accuracy") {
  const Mat X = uniform_mat(300, 4, 3);
  std::mt19937_64 rng(4);
  std::vector<int> y(300);
  for (std::size_t i = 0; i < 300; ++i) y[i] = (X(i, 0) * X(i, 1) > 0.1 || rng() % 7 == 0) ? 1 : 0;
  double prev = 0.0;
  for (int d = 1; d <= 6; ++d) {
    const auto t = fit_tree(X, y, d, 5);
    CHECK(t.depth() <= d);
    std::size_t total = 0;
    for (const auto& nd : t.nodes) {
      if (nd.leaf) total += nd.count0 + nd.count1;
    }
    CHECK(total == 300);
    const double acc = training_accuracy(t, X, y);
    CHECK(acc >= prev);
    prev = acc;
  }
}

TEST_CASE("uncapped depth fits the training labels") {
  const Mat X = uniform_mat(150, 3, 6);
  std::mt19937_64 rng(7);
  std::vector<int> y(150);
  for (int& v : y) v = static_cast<int>(rng() % 2);
  CHECK(training_accuracy(fit_tree(X, y, kUncapped), X, y) == 1.0);
}

TEST_CASE("F1 examples") {
  CHECK(f1_score(std::vector<int>{1, 0, 1}, std::vector<int>{1, 0, 1}) == 1.0);
  CHECK(f1_score(std::vector<int>{0, 0, 0}, std::vector<int>{1, 0, 1}) == 0.0);
  // TP=1, FP=1, FN=1
  CHECK(f1_score(std::vector<int>{1, 1, 0}, std::vector<int>{1, 0, 1}) == doctest::Approx(0.5));
  CHECK(f1_score(std::vector<int>{0, 0}, std::vector<int>{0, 0}) == 1.0);
}

TEST_CASE("F1 agrees with a confusion-matrix oracle") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> p(30), l(30);
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < 30; ++i) {
      p[i] = static_cast<int>(rng() % 2);
      l[i] = static_cast<int>(rng() % 3 == 0);
      tp += p[i] && l[i];
      fp += p[i] && !l[i];
      fn += !p[i] && l[i];
    }
    const double expected = tp + fp + fn == 0 ? 1.0 : 2 * tp / (2 * tp + fp + fn);
    CHECK(f1_score(p, l) == doctest::Approx(expected).epsilon(1e-14));
  }
}

TEST_CASE("regression tree reduces variance") {
  const Mat X = uniform_mat(200, 2, 9);
  std::vector<double> t(200);
  for (std::size_t i = 0; i < 200; ++i) t[i] = X(i, 1) > 0.2 ? 3.0 : -1.0;
  const auto tree = fit_regression_tree(X, t, 1);
  const auto p = tree.predict(X);
  for (std::size_t i = 0; i < 200; ++i) CHECK(p[i] == doctest::Approx(t[i]));
}

TEST_CASE("no-change model is reported degenerate") {
  const Mat X = uniform_mat(50, 2, 10);
  std::vector<int> f(50, 1);
  const auto rows = locality_curve({{"none", f, f}}, X, {1, 2});
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].degenerate);
}

TEST_CASE("concentrated changes are more local than scattered ones") {
  const std::size_t n = 1000;
  const Mat X = uniform_mat(n, 4, 11);
  std::vector<int> f(n, 0), box(n, 0), scattered(n, 0);
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (X(i, 0) > 0.4 && X(i, 2) < -0.2) {
      box[i] = 1;
      ++count;
    }
  }
  std::mt19937_64 rng(12);
  std::size_t placed = 0;
  while (placed < count) {
    const std::size_t i = rng() % n;
    if (!scattered[i]) {
      scattered[i] = 1;
      ++placed;
    }
  }
  const auto rows = locality_curve({{"box", f, box}, {"scattered", f, scattered}}, X, {1, 2, 3, 4, 5, 6});
  REQUIRE(rows.size() == 12);
  // a single split cannot carve out a two-feature box
  for (int d = 1; d < 6; ++d) CHECK(rows[d].mean_f1 > rows[6 + d].mean_f1);
}

TEST_CASE("locality without bootstrap is deterministic when splits are unambiguous") {
  const Mat X = uniform_mat(400, 3, 13);
  std::vector<int> f(400, 0), g(400, 0);
  for (std::size_t i = 0; i < 400; ++i) g[i] = X(i, 1) > 0.3 ? 1 : 0;
  LocalityOptions o;
  o.bootstrap = false;
  const auto rows = locality_curve({{"m", f, g}}, X, {1, 2, 3, 4, 5, 6}, o);
  REQUIRE(rows.size() == 6);
  for (const auto& r : rows) {
    CHECK(r.std_f1 == 0.0);
    CHECK(r.mean_f1 == 1.0);
  }
  o.exec = kernels::Exec::serial;
  const auto serial = locality_curve({{"m", f, g}}, X, {1, 2, 3}, o);
  o.exec = kernels::Exec::parallel;
  o.bootstrap = true;
  const auto a = locality_curve({{"m", f, g}}, X, {1, 2, 3}, o);
  o.exec = kernels::Exec::serial;
  const auto b = locality_curve({{"m", f, g}}, X, {1, 2, 3}, o);
  for (std::size_t i = 0; i < 3; ++i) CHECK(a[i].mean_f1 == b[i].mean_f1);
  CHECK(serial.size() == 3);
}

TEST_CASE("uncapped tree reproduces the signal") {
  const std::size_t n = 300;
  const Mat X = uniform_mat(n, 3, 14);
  std::vector<double> flogit(n), signal(n);
  std::vector<int> s(n);
  for (std::size_t i = 0; i < n; ++i) {
    flogit[i] = 2.0 * X(i, 0) + 0.3;
    s[i] = X(i, 2) > 0.1 ? 1 : 0;
    signal[i] = s[i] ? (X(i, 1) > 0 ? -1.6 : -0.2) : 0.1 * X(i, 1);
  }
  const auto rows = posthoc_compare(X, flogit, s, signal, SignalKind::ratio_deviation, {1, kUncapped});
  CHECK(rows[1].approx_p_rule == doctest::Approx(rows[1].self_p_rule).epsilon(1e-12));
  CHECK(rows[0].base_p_rule == rows[1].base_p_rule);
  const auto add = posthoc_compare(X, flogit, s, signal, SignalKind::additive_logit, {kUncapped});
  CHECK(add[0].approx_p_rule == doctest::Approx(add[0].self_p_rule).epsilon(1e-12));
}

TEST_CASE("shallow tree on a many-feature signal degrades towards the base") {
  const std::size_t n = 2000;
  const Mat X = uniform_mat(n, 6, 15);
  std::vector<double> flogit(n), signal(n);
  std::vector<int> s(n);
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = X(i, 5) > 0.3 ? 1 : 0;
    flogit[i] = 1.5 * X(i, 0) - (s[i] ? 0.8 : 0.0);
    // signal depends on many features jointly and on the group
    double acc = 0.0;
    for (std::size_t j = 0; j < 5; ++j) acc += (X(i, j) > 0 ? 1.0 : -1.0);
    signal[i] = s[i] && std::abs(acc) <= 1.0 ? -1.5 : 0.0;
  }
  const auto rows = posthoc_compare(X, flogit, s, signal, SignalKind::ratio_deviation, {1, kUncapped});
  const double gap1 = std::abs(rows[0].approx_p_rule - rows[0].self_p_rule);
  const double gapu = std::abs(rows[1].approx_p_rule - rows[1].self_p_rule);
  CHECK(gap1 > gapu);
  CHECK(std::abs(rows[0].approx_p_rule - rows[0].base_p_rule) < std::abs(rows[0].self_p_rule - rows[0].base_p_rule));
}

TEST_CASE("built-in grid examples") {
  const auto law_dp = builtin_grid("law_dp");
  const auto s1 = segment_assign(0.60, 0.70, law_dp);
  CHECK(s1.fair_quartile == 2);
  CHECK(s1.acc_quartile == 2);
  const auto s2 = segment_assign(0.10, 0.76, builtin_grid("law_eo"));
  CHECK(s2.fair_quartile == 4);
  CHECK(s2.acc_quartile == 4);
  // edges
  CHECK(segment_assign(0.5587, 0.6709, law_dp).fair_quartile == 2);
  CHECK(segment_assign(0.5587, 0.6709, law_dp).acc_quartile == 2);
  CHECK(segment_assign(0.1503, 0.5, builtin_grid("law_eo")).fair_quartile == 4);
  CHECK(segment_assign(0.2415, 0.5, builtin_grid("law_eo")).fair_quartile == 3);
  CHECK_THROWS_AS(builtin_grid("adult_dp"), Error);
  for (const auto& name : builtin_grid_names()) CHECK_NOTHROW(builtin_grid(name).validate());
}

TEST_CASE("segment assignment partitions the unit square") {
  std::mt19937_64 rng(16);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (const auto& name : builtin_grid_names()) {
    const auto g = builtin_grid(name);
    for (int i = 0; i < 500; ++i) {
      const double f = u(rng), a = u(rng);
      const auto s = segment_assign(f, a, g);
      CHECK(s.fair_quartile >= 1);
      CHECK(s.fair_quartile <= 4);
      CHECK(s.acc_quartile >= 1);
      CHECK(s.acc_quartile <= 4);
      int hits = 0;
      for (int q = 1; q <= 4; ++q) {
        const auto& e = g.fairness_edges;
        bool in;
        if (g.orientation == Orientation::higher_fair_better) {
          const double lo = q == 1 ? -1e9 : e[q - 2], hi = q == 4 ? 1e9 : e[q - 1];
          in = f >= lo && f < hi;
        } else {
          const double lo = q == 4 ? -1e9 : e[3 - q], hi = q == 1 ? 1e9 : e[4 - q];
          in = f > lo && f <= hi;
        }
        hits += in;
        if (in) CHECK(s.fair_quartile == q);
      }
      CHECK(hits == 1);
    }
  }
}

TEST_CASE("grid from results uses interpolated percentiles") {
  const std::vector<double> f{0.1, 0.2, 0.3, 0.4, 0.5}, a{1, 2, 3, 4, 5};
  const auto g = grid_from_results(f, a, Orientation::higher_fair_better);
  CHECK(g.fairness_edges[0] == doctest::Approx(0.2));
  CHECK(g.fairness_edges[1] == doctest::Approx(0.3));
  CHECK(g.fairness_edges[2] == doctest::Approx(0.4));
  const std::vector<double> same{0.5, 0.5, 0.5};
  CHECK_THROWS_AS(grid_from_results(same, same, Orientation::higher_fair_better), Error);
}
