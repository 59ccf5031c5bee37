#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "commod/basemodel.hpp"
#include "commod/error.hpp"
#include "commod/mathutil.hpp"

using namespace commod;
using namespace commod::basemodel;

namespace {

// y = 1[x0 > 0] with a margin, s alternating.
tabular::Dataset separable(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.2, 2.0);
  std::normal_distribution<double> nd;
  tabular::Dataset ds;
  ds.X = Mat(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    const bool pos = i % 2 == 0;
    ds.X(i, 0) = pos ? u(rng) : -u(rng);
    ds.X(i, 1) = nd(rng);
    ds.y.push_back(pos ? 1 : 0);
    ds.s.push_back(i % 3 == 0 ? 1 : 0);
    ds.row_ids.push_back(i);
  }
  ds.feature_names = {"x0", "x1"};
  return ds;
}

}  // namespace

TEST_CASE("logistic regression separates a separable toy set") {
  const auto ds = separable(200, 1);
  const auto m = train_logreg(ds);
  const auto yhat = threshold(predict_proba(m, ds.X));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.rows(); ++i) correct += yhat[i] == ds.y[i];
  CHECK(correct == ds.rows());
}

TEST_CASE("zero model predicts one half") {
  LogisticModel m;
  m.w = {0.0, 0.0};
  const auto p = predict_proba(m, Mat::from_rows({{1.0, 2.0}, {-3.0, 0.5}}));
  CHECK(p[0] == 0.5);
  CHECK(p[1] == 0.5);
}

TEST_CASE("large bias saturates towards 1") {
  LogisticModel m;
  m.w = {0.0};
  m.b = 40.0;
  const auto p = predict_proba(m, Mat::from_rows({{0.0}}));
  CHECK(p[0] > 1.0 - 1e-12);
  const auto z = logits(m, Mat::from_rows({{0.0}}));
  CHECK(std::isfinite(z[0]));
}

TEST_CASE("score of ln 4 is 0.8") {
  LogisticModel m;
  m.w = {1.0};
  m.b = 0.0;
  const auto p = predict_proba(m, Mat::from_rows({{std::log(4.0)}}));
  CHECK(p[0] == doctest::Approx(0.8).epsilon(1e-14));
}

TEST_CASE("clamped logit values") {
  CHECK(clamped_logit(0.5, 1e-6) == 0.0);
  CHECK(clamped_logit(0.8, 1e-6) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(std::abs(clamped_logit(1.0, 1e-6) - 13.8155) < 1e-4);
  CHECK(std::abs(clamped_logit(0.0, 1e-6) + 13.8155) < 1e-4);
}

TEST_CASE("sigmoid of logits recovers the clamped probability") {
  const auto ds = separable(100, 2);
  auto m = train_logreg(ds, {200, 0.5, 0});
  m.b += 3.0;
  const auto p = predict_proba(m, ds.X);
  const auto z = logits(m, ds.X);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double c = std::clamp(p[i], m.clamp_eps, 1.0 - m.clamp_eps);
    CHECK(std::abs(sigmoid(z[i]) - c) < 1e-12);
    if (p[i] != 0.5) CHECK((p[i] > 0.5) == (z[i] > 0.0));
  }
}

TEST_CASE("loss is non-increasing at a small learning rate") {
  const auto ds = separable(120, 3);
  std::vector<double> hist;
  train_logreg(ds, {300, 1e-3, 0}, &hist);
  REQUIRE(hist.size() == 300);
  for (std::size_t e = 1; e < hist.size(); ++e) CHECK(hist[e] <= hist[e - 1] + 1e-15);
}

TEST_CASE("divergence reports the last finite epoch") {
  auto ds = separable(20, 4);
  ds.X(0, 0) = 1e200;
  try {
    train_logreg(ds, {50, 1e10, 0});
    FAIL("expected divergence");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("last finite epoch") != std::string::npos);
  }
}

TEST_CASE("training is deterministic under its seed") {
  const auto ds = separable(80, 5);
  const auto a = train_logreg(ds, {100, 0.5, 7});
  const auto b = train_logreg(ds, {100, 0.5, 7});
  CHECK(a.w == b.w);
  CHECK(a.b == b.b);
}

TEST_CASE("scores file aligns by row id") {
  auto ds = separable(4, 6);
  ds.row_ids = {3, 0, 2, 1};
  const auto path = std::filesystem::temp_directory_path() / "commod_scores_test.csv";
  {
    std::ofstream out(path);
    out << "row_index,probability\n0,0.1\n1,0.2\n2,0.3\n3,0.4\n";
  }
  const auto p = load_scores(path, ds);
  CHECK(p == std::vector<double>{0.4, 0.1, 0.3, 0.2});
  {
    std::ofstream out(path);
    out << "0,0.1\n1,1.5\n";
  }
  CHECK_THROWS_AS(load_scores(path, ds), Error);
  {
    std::ofstream out(path);
    out << "0,0.1\n1,0.5\n";
  }
  CHECK_THROWS_AS(load_scores(path, ds), Error);
  std::filesystem::remove(path);
}
