#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "commod/error.hpp"
#include "commod/log.hpp"
#include "commod/synthetic.hpp"
#include "commod/tabular.hpp"

using namespace commod;
using namespace commod::tabular;

namespace {

Schema schema_of(const std::string& label, const std::string& sensitive) {
  Schema s;
  s.label = label;
  s.sensitive = sensitive;
  return s;
}

// n rows, numeric feature, categorical feature, alternating label and group.
std::string toy_csv(std::size_t n) {
  std::ostringstream out;
  out << "age,color,race,label\n";
  for (std::size_t i = 0; i < n; ++i) {
    out << (20 + 3 * i) << "," << (i % 3 == 0 ? "red" : "blue") << "," << (i % 4 == 0 ? "x" : "y") << ","
        << (i % 2) << "\n";
  }
  return out.str();
}

Dataset toy_dataset(std::size_t n) {
  const auto schema = schema_of("label", "race");
  return preprocess(parse_csv(toy_csv(n), schema), schema);
}

}  // namespace

TEST_CASE("parse_csv reads a small table") {
  const auto schema = schema_of("label", "race");
  const auto t = parse_csv("age,crime,race,label\n30,1,a,0\n40,0,b,1\n50,1,a,1\n", schema);
  CHECK(t.rows.size() == 3);
  CHECK(t.column_names.size() == 4);
  CHECK(t.kinds[0] == ColumnKind::numeric);
  CHECK(t.kinds[2] == ColumnKind::categorical);
}

TEST_CASE("parse_csv handles quoted fields") {
  const auto schema = schema_of("label", "g");
  const auto t = parse_csv("name,g,label\n\"a, b\",1,0\n\"say \"\"hi\"\"\",0,1\n", schema);
  CHECK(t.rows[0][0] == "a, b");
  CHECK(t.rows[1][0] == "say \"hi\"");
}

TEST_CASE("parse_csv rejects ragged rows") {
  const auto schema = schema_of("label", "race");
  try {
    parse_csv("age,crime,race,label\n30,1,a,0\n40,0,b\n", schema);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("ragged row at line 3") != std::string::npos);
  }
}

TEST_CASE("schema naming a missing column is rejected") {
  const auto schema = schema_of("label", "gender");
  try {
    parse_csv("age,crime,race,label\n30,1,a,0\n", schema);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("unknown column") != std::string::npos);
  }
}

TEST_CASE("parse_schema reads roles and feature list") {
  const auto s = parse_schema(R"({"label": "y", "sensitive": "race", "positive_label": "yes", "features": ["a", "b"]})");
  CHECK(s.label == "y");
  CHECK(s.sensitive == "race");
  REQUIRE(s.positive_label);
  CHECK(*s.positive_label == "yes");
  CHECK(s.features == std::vector<std::string>{"a", "b"});
  CHECK_THROWS_AS(parse_schema(R"({"label": "y"})"), Error);
}

TEST_CASE("numeric column is standardized with the population stddev") {
  const auto schema = schema_of("label", "g");
  const auto ds = preprocess(parse_csv("v,g,label\n1,a,0\n2,b,1\n3,a,1\n", schema), schema);
  const double z = 3.0 / std::sqrt(6.0);  // (x - 2) / sqrt(2/3)
  CHECK(ds.X(0, 0) == doctest::Approx(-z).epsilon(1e-12));
  CHECK(ds.X(1, 0) == doctest::Approx(0.0));
  CHECK(ds.X(2, 0) == doctest::Approx(z).epsilon(1e-12));
  CHECK(std::abs(ds.X(2, 0) - 1.2247) < 1e-4);
}

TEST_CASE("categorical column becomes one indicator per value") {
  const auto schema = schema_of("label", "g");
  const auto ds = preprocess(parse_csv("col,g,label\nA,a,0\nB,b,1\nA,a,1\n", schema), schema);
  CHECK(ds.feature_names == std::vector<std::string>{"col=A", "col=B"});
  CHECK(ds.X(0, 0) == 1.0);
  CHECK(ds.X(0, 1) == 0.0);
  CHECK(ds.X(1, 1) == 1.0);
}

TEST_CASE("minority sensitive value maps to 1") {
  const auto schema = schema_of("label", "g");
  const auto ds = preprocess(parse_csv("v,g,label\n1,a,0\n2,b,1\n3,a,1\n", schema), schema);
  CHECK(ds.mapping.sensitive_one == "b");
  CHECK(ds.s == std::vector<int>{0, 1, 0});
}

TEST_CASE("positive_label selects the label value mapped to 1") {
  auto schema = schema_of("label", "g");
  schema.positive_label = "no";
  const auto ds = preprocess(parse_csv("v,g,label\n1,a,no\n2,b,yes\n3,a,yes\n", schema), schema);
  CHECK(ds.y == std::vector<int>{1, 0, 0});
  schema.positive_label = "maybe";
  CHECK_THROWS_AS(preprocess(parse_csv("v,g,label\n1,a,no\n2,b,yes\n", schema), schema), Error);
}

TEST_CASE("non-binary sensitive attribute is rejected") {
  const auto schema = schema_of("label", "g");
  try {
    preprocess(parse_csv("v,g,label\n1,a,0\n2,b,1\n3,c,1\n", schema), schema);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("sensitive attribute must be binary") != std::string::npos);
  }
}

TEST_CASE("zero-variance numeric column is encoded as constant 0") {
  const auto schema = schema_of("label", "g");
  log::ScopedSilence quiet;
  const auto ds = preprocess(parse_csv("v,w,g,label\n5,1,a,0\n5,2,b,1\n5,3,a,1\n", schema), schema);
  for (std::size_t i = 0; i < 3; ++i) CHECK(ds.X(i, 0) == 0.0);
  CHECK(ds.encodings[0].stddev == 0.0);
}

TEST_CASE("preprocess is a pure function") {
  const auto schema = schema_of("label", "race");
  const auto raw = parse_csv(toy_csv(40), schema);
  const auto a = preprocess(raw, schema);
  const auto b = preprocess(raw, schema);
  CHECK(a.X.data == b.X.data);
  CHECK(a.y == b.y);
  CHECK(a.s == b.s);
  CHECK(a.feature_names == b.feature_names);
}

TEST_CASE("split of 10 rows at 0.7") {
  const auto ds = toy_dataset(10);
  const auto [train, test] = split(ds, {0.7, 0, false});
  CHECK(train.rows() == 7);
  CHECK(test.rows() == 3);
  std::set<std::size_t> all(train.row_ids.begin(), train.row_ids.end());
  for (auto id : test.row_ids) CHECK(all.insert(id).second);
  CHECK(all.size() == 10);
}

TEST_CASE("split is deterministic") {
  const auto ds = toy_dataset(60);
  const auto a = split(ds, {0.7, 3, false});
  const auto b = split(ds, {0.7, 3, false});
  CHECK(a.first.row_ids == b.first.row_ids);
  CHECK(a.second.row_ids == b.second.row_ids);
}

TEST_CASE("split rejects tiny datasets and bad fractions") {
  const auto ds = toy_dataset(10);
  CHECK_THROWS_AS(split(ds.subset({0, 1, 2, 3, 4}), {0.7, 0, false}), Error);
  try {
    split(ds.subset({0, 1, 2, 3, 4}), {0.7, 0, false});
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("dataset too small") != std::string::npos);
  }
  CHECK_THROWS_AS(split(ds, {1.0, 0, false}), Error);
  CHECK_THROWS_AS(split(ds, {0.0, 0, false}), Error);
}

TEST_CASE("degenerate split half advises a different seed") {
  // Only one positive label: one half must lack it.
  const auto schema = schema_of("label", "g");
  std::string csv = "v,g,label\n";
  for (int i = 0; i < 12; ++i) csv += std::to_string(i) + "," + (i % 2 ? "a" : "b") + "," + (i == 0 ? "1" : "0") + "\n";
  const auto ds = preprocess(parse_csv(csv, schema), schema);
  try {
    split(ds, {0.5, 0, false});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("different seed") != std::string::npos);
  }
}

TEST_CASE("every row lands in exactly one split half") {
  const auto ds = toy_dataset(97);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto [train, test] = split(ds, {0.6, seed, false});
    std::vector<int> seen(ds.rows(), 0);
    for (auto id : train.row_ids) ++seen[id];
    for (auto id : test.row_ids) ++seen[id];
    for (int c : seen) CHECK(c == 1);
  }
}

TEST_CASE("refit_on_train gives zero-mean unit-variance train columns") {
  synthetic::SyntheticSpec spec;
  spec.n = 500;
  const auto data = synthetic::make_synthetic(spec);
  const auto ds = preprocess(data.raw, data.schema);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto [train, test] = split(ds, {0.7, seed, true});
    CHECK(train.standardized_on_train);
    for (std::size_t j = 0; j < train.cols(); ++j) {
      if (!train.encodings[j].numeric) continue;
      double mean = 0.0, sq = 0.0;
      for (std::size_t i = 0; i < train.rows(); ++i) mean += train.X(i, j);
      mean /= static_cast<double>(train.rows());
      for (std::size_t i = 0; i < train.rows(); ++i) sq += (train.X(i, j) - mean) * (train.X(i, j) - mean);
      const double sd = std::sqrt(sq / static_cast<double>(train.rows()));
      CHECK(std::abs(mean) < 1e-10);
      CHECK(std::abs(sd - 1.0) < 1e-10);
    }
  }
}

TEST_CASE("full-data standardization holds on the whole table") {
  synthetic::SyntheticSpec spec;
  spec.n = 300;
  const auto data = synthetic::make_synthetic(spec);
  const auto ds = preprocess(data.raw, data.schema);
  for (std::size_t j = 0; j < ds.cols(); ++j) {
    if (!ds.encodings[j].numeric) continue;
    double mean = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < ds.rows(); ++i) mean += ds.X(i, j);
    mean /= static_cast<double>(ds.rows());
    for (std::size_t i = 0; i < ds.rows(); ++i) sq += (ds.X(i, j) - mean) * (ds.X(i, j) - mean);
    CHECK(std::abs(mean) < 1e-10);
    CHECK(std::abs(std::sqrt(sq / static_cast<double>(ds.rows())) - 1.0) < 1e-10);
  }
}

TEST_CASE("permutation is a seeded bijection") {
  const auto p = permutation(50, 7);
  auto sorted = p;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 50; ++i) CHECK(sorted[i] == i);
  CHECK(permutation(50, 7) == p);
  CHECK(permutation(50, 8) != p);
}

TEST_CASE("synthetic data has the documented columns and group sizes") {
  synthetic::SyntheticSpec spec;
  const auto data = synthetic::make_synthetic(spec);
  CHECK(data.raw.rows.size() == 4000);
  const auto ds = preprocess(data.raw, data.schema);
  const double s1 = std::accumulate(ds.s.begin(), ds.s.end(), 0.0) / static_cast<double>(ds.rows());
  CHECK(std::abs(s1 - spec.p_sensitive) < 0.03);
  double pos0 = 0, n0 = 0, pos1 = 0, n1 = 0;
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    (ds.s[i] ? pos1 : pos0) += ds.y[i];
    (ds.s[i] ? n1 : n0) += 1;
  }
  CHECK(std::abs(pos0 / n0 - spec.base_rate_s0) < 0.04);
  CHECK(std::abs(pos1 / n1 - spec.base_rate_s1) < 0.04);
  const auto again = synthetic::make_synthetic(spec);
  CHECK(again.raw.rows == data.raw.rows);
}
