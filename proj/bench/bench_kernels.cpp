// Serial reference vs OpenMP paths of the data-parallel kernels.

#include <benchmark/benchmark.h>

#include <random>

#include "commod/kernels.hpp"
#include "commod/theory.hpp"

using commod::Mat;
using commod::kernels::Exec;

namespace {

Mat random_mat(std::size_t r, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N;
  Mat m(r, c);
  for (auto& v : m.data) v = N(rng);
  return m;
}

void BM_Affine(benchmark::State& st, Exec exec) {
  const auto n = static_cast<std::size_t>(st.range(0));
  const Mat X = random_mat(n, 32, 1);
  const Mat W = random_mat(32, 32, 2);
  std::vector<double> b(32, 0.1);
  Mat out(n, 32);
  for (auto _ : st) {
    commod::kernels::affine(X, W.data, b, out, exec);
    benchmark::DoNotOptimize(out.data.data());
  }
  st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(n));
}

void BM_AffineGradParams(benchmark::State& st, Exec exec) {
  const auto n = static_cast<std::size_t>(st.range(0));
  const Mat X = random_mat(n, 32, 3);
  const Mat G = random_mat(n, 32, 4);
  std::vector<double> dW(32 * 32), db(32);
  for (auto _ : st) {
    std::fill(dW.begin(), dW.end(), 0.0);
    std::fill(db.begin(), db.end(), 0.0);
    commod::kernels::affine_grad_params(G, X, dW, db, exec);
    benchmark::DoNotOptimize(dW.data());
  }
}

void BM_ExhaustiveBoc(benchmark::State& st, Exec exec) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(0.05, 0.95);
  std::vector<commod::theory::DistPoint> pts(static_cast<std::size_t>(st.range(0)));
  for (auto& p : pts) p = {1.0 / static_cast<double>(pts.size()), U(rng), U(rng), U(rng)};
  const auto dist = commod::theory::FiniteDistribution::from_points(pts);
  commod::theory::CostSpec costs{0.4, 0.5, 0.6, 1.0, 0.5};
  for (auto _ : st) benchmark::DoNotOptimize(commod::theory::exhaustive_min_risk(dist, costs, exec));
}

void BM_BruteForceFlips(benchmark::State& st, Exec exec) {
  const commod::theory::FlipTable t{2, 6, 5, 3};
  for (auto _ : st) benchmark::DoNotOptimize(commod::theory::brute_force_k_flips(t, 3, exec));
}

}  // namespace

BENCHMARK_CAPTURE(BM_Affine, serial, Exec::serial)->Arg(512)->Arg(4096);
BENCHMARK_CAPTURE(BM_Affine, parallel, Exec::parallel)->Arg(512)->Arg(4096);
BENCHMARK_CAPTURE(BM_AffineGradParams, serial, Exec::serial)->Arg(4096);
BENCHMARK_CAPTURE(BM_AffineGradParams, parallel, Exec::parallel)->Arg(4096);
BENCHMARK_CAPTURE(BM_ExhaustiveBoc, serial, Exec::serial)->Arg(12);
BENCHMARK_CAPTURE(BM_ExhaustiveBoc, parallel, Exec::parallel)->Arg(12);
BENCHMARK_CAPTURE(BM_BruteForceFlips, serial, Exec::serial);
BENCHMARK_CAPTURE(BM_BruteForceFlips, parallel, Exec::parallel);

BENCHMARK_MAIN();
