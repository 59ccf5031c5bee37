// One PASS/FAIL line per acceptance criterion. Exit status is nonzero when any
// criterion fails; criterion 11 prints SKIP unless dataset paths are supplied
// through COMMOD_LAW_CSV/COMMOD_LAW_SCHEMA and COMMOD_COMPAS_CSV/COMMOD_COMPAS_SCHEMA.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "commod/debias.hpp"
#include "commod/experiments.hpp"
#include "commod/interp_eval.hpp"
#include "commod/log.hpp"
#include "commod/mathutil.hpp"
#include "commod/metrics.hpp"

using namespace commod;
namespace ex = commod::experiments;

namespace {

// Tolerances and limits.
constexpr double kGradTol = 1e-5;
constexpr double kIdentityTol = 1e-12;
constexpr double kBocTol = 1e-12;
constexpr double kTargetPRule = 0.90;
constexpr double kMaxAccDrop = 0.10;
constexpr double kMatchTol = 0.05;
constexpr double kMinimalChange = 0.01;
constexpr double kMinR2 = 0.9;
constexpr double kReproTol = 0.05;

const std::vector<double> kEfficacyLambdas{1.0, 3.0, 10.0, 20.0, 40.0};
constexpr int kEfficacySeeds = 3;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int id, bool pass, double seconds, double limit, const std::string& detail) {
  const bool in_time = seconds < limit;
  const bool ok = pass && in_time;
  if (!ok) ++failures;
  std::printf("criterion %d: %s  %s [%.1fs / %.0fs%s]\n", id, ok ? "PASS" : "FAIL", detail.c_str(), seconds, limit,
              in_time ? "" : ", over time limit");
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

// ---- 1: gradients -------------------------------------------------------

debias::TrainingData random_batch(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  debias::TrainingData b;
  b.X = Mat(n, d);
  for (double& v : b.X.data) v = nd(rng);
  for (std::size_t i = 0; i < n; ++i) {
    b.y.push_back(static_cast<int>(rng() % 2));
    b.s.push_back(static_cast<int>(rng() % 2));
    b.flogit.push_back(2.0 * nd(rng));
  }
  return b;
}

void criterion_gradients() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (auto mode : {debias::FairnessMode::dp, debias::FairnessMode::eo}) {
    const auto batch = random_batch(64, 5, 1);
    debias::CommodConfig cfg;
    cfg.k = 3;
    cfg.fairness_mode = mode;
    cfg.lambda_fair = 1.0;
    cfg.lambda_ratio = 0.5;
    cfg.lambda_sparsity = 0.1;
    cfg.lambda_diversity = 0.1;
    debias::ConceptRatioNet net(cfg.k, 5, false);
    auto adv = debias::Adversary::make(mode, cfg.adversary_hidden, 2);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd(0.0, 0.5);
    for (int point = 0; point < 5; ++point) {
      for (double& v : net.mutable_params()) v = nd(rng);
      auto ap = adv.net.mutable_params();
      for (double& v : ap) v = nd(rng);
      const std::vector<double> gp(net.params().begin(), net.params().end());
      const std::vector<double> hp(adv.net.params().begin(), adv.net.params().end());
      net::LossWithGrad gen = [&](std::span<const double> p, std::vector<double>* g) {
        std::copy(p.begin(), p.end(), net.mutable_params().begin());
        return debias::loss_components(batch, net, adv, cfg, g).total;
      };
      worst = std::max(worst, net::grad_check(gen, gp));
      std::copy(gp.begin(), gp.end(), net.mutable_params().begin());
      net::LossWithGrad adversary = [&](std::span<const double> p, std::vector<double>* g) {
        auto mp = adv.net.mutable_params();
        std::copy(p.begin(), p.end(), mp.begin());
        return debias::loss_components(batch, net, adv, cfg, nullptr, g).L_S;
      };
      worst = std::max(worst, net::grad_check(adversary, hp));
    }
  }
  report(1, worst < kGradTol, seconds_since(t0), 10, fmt("gradient check, max relative error %.2e (< 1e-5)", worst));
}

// ---- 2-5: theory suites ----------------------------------------------------

void criterion_suite(int id, const std::function<ex::SuiteResult(const ex::TheoryVerifyOptions&)>& suite,
                     double limit, double tol, const char* what) {
  ex::TheoryVerifyOptions o;
  const auto t0 = Clock::now();
  const auto r = suite(o);
  const bool pass = r.passed() && r.max_error < tol;
  std::string detail = std::string(what) + fmt(": %.0f cases, %.0f failures, max error %.2e", static_cast<double>(r.cases),
                                               static_cast<double>(r.failures), r.max_error);
  if (!r.first_failure.empty()) detail += " (" + r.first_failure + ")";
  report(id, pass, seconds_since(t0), limit, detail);
}

// ---- 6, 8, 9: synthetic runs ------------------------------------------------

struct Point {
  double lambda = 0;
  double p_rule = 0, accuracy = 0, change = 0, base_accuracy = 0;
};

struct EfficacyRuns {
  std::vector<Point> commod, adv;               // seed-averaged, one per lambda
  std::vector<ex::CommodRun> commod_seed0;      // per lambda
  std::vector<ex::AdvRun> adv_seed0;
  std::optional<ex::PreparedData> data_seed0;
  double seconds = 0;
};

ex::RunConfig synthetic_config(std::uint64_t seed) {
  ex::RunConfig cfg;
  cfg.synthetic = true;
  ex::apply_seed(cfg, seed);
  return cfg;
}

EfficacyRuns efficacy_runs() {
  EfficacyRuns out;
  const auto t0 = Clock::now();
  const std::size_t L = kEfficacyLambdas.size();
  out.commod.resize(L);
  out.adv.resize(L);
  for (std::size_t l = 0; l < L; ++l) out.commod[l].lambda = out.adv[l].lambda = kEfficacyLambdas[l];
  for (int seed = 0; seed < kEfficacySeeds; ++seed) {
    const auto cfg = synthetic_config(static_cast<std::uint64_t>(seed));
    auto data = ex::prepare(cfg);
    for (std::size_t l = 0; l < L; ++l) {
      auto c = cfg.commod;
      c.lambda_fair = kEfficacyLambdas[l];
      auto cr = ex::run_commod(data, c);
      auto ar = ex::run_advdebias(data, c);
      for (auto* p : {&out.commod[l], &out.adv[l]}) p->base_accuracy += cr.base_test.accuracy / kEfficacySeeds;
      out.commod[l].p_rule += cr.test.p_rule / kEfficacySeeds;
      out.commod[l].accuracy += cr.test.accuracy / kEfficacySeeds;
      out.commod[l].change += cr.test.change_proportion / kEfficacySeeds;
      out.adv[l].p_rule += ar.test.p_rule / kEfficacySeeds;
      out.adv[l].accuracy += ar.test.accuracy / kEfficacySeeds;
      out.adv[l].change += ar.test.change_proportion / kEfficacySeeds;
      if (seed == 0) {
        out.commod_seed0.push_back(std::move(cr));
        out.adv_seed0.push_back(std::move(ar));
      }
    }
    if (seed == 0) out.data_seed0 = std::move(data);
  }
  out.seconds = seconds_since(t0);
  for (std::size_t l = 0; l < L; ++l) {
    std::printf("  lambda_fair %5.1f | COMMOD P-Rule %.3f acc %.3f changes %.3f | AdvDebias P-Rule %.3f acc %.3f changes %.3f\n",
                kEfficacyLambdas[l], out.commod[l].p_rule, out.commod[l].accuracy, out.commod[l].change,
                out.adv[l].p_rule, out.adv[l].accuracy, out.adv[l].change);
  }
  std::printf("  base model: accuracy %.3f\n", out.commod[0].base_accuracy);
  return out;
}

void criterion_efficacy(const EfficacyRuns& runs) {
  // COMMOD points reaching the target within the accuracy budget.
  const Point* best = nullptr;
  for (const auto& p : runs.commod) {
    if (p.p_rule >= kTargetPRule && p.base_accuracy - p.accuracy <= kMaxAccDrop) {
      if (!best || p.change < best->change) best = &p;
    }
  }
  if (!best) {
    double top = 0.0, top_acc = 0.0;
    for (const auto& p : runs.commod) {
      if (p.p_rule > top) {
        top = p.p_rule;
        top_acc = p.base_accuracy - p.accuracy;
      }
    }
    report(6, false, runs.seconds, 300,
           fmt("no lambda_fair reaches P-Rule >= 0.90 with accuracy drop <= 0.10 (best P-Rule %.3f at drop %.3f)", top,
               top_acc));
    return;
  }
  const Point* match = nullptr;
  for (const auto& p : runs.adv) {
    if (std::abs(p.p_rule - best->p_rule) <= kMatchTol && (!match || p.change < match->change)) match = &p;
  }
  if (!match) {
    report(6, false, runs.seconds, 300,
           fmt("COMMOD P-Rule %.3f at lambda %.1f, but no AdvDebias point within +-0.05", best->p_rule, best->lambda));
    return;
  }
  report(6, best->change <= match->change, runs.seconds, 300,
         fmt("COMMOD P-Rule %.3f changes %.3f vs AdvDebias P-Rule %.3f changes %.3f", best->p_rule, best->change,
             match->p_rule, match->change));
}

void criterion_minimal_change() {
  const auto t0 = Clock::now();
  const auto cfg = synthetic_config(0);
  const auto data = ex::prepare(cfg);
  auto c = cfg.commod;
  c.lambda_fair = 0.0;
  c.epochs = 200;
  auto gap_on_unflipped = [&](const debias::TrainedCommod& m) {
    const auto g = m.scores(data.train.X, data.flogit_train);
    const auto yg = m.predict(data.train.X, data.flogit_train);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const int yf = data.flogit_train[i] > 0.0 ? 1 : 0;
      if (yf != yg[i]) continue;
      sum += std::abs(g[i] - sigmoid(data.flogit_train[i]));
      ++n;
    }
    return n ? sum / static_cast<double>(n) : 0.0;
  };
  c.lambda_ratio = 0.5;
  const auto pulled = ex::run_commod(data, c);
  c.lambda_ratio = 0.0;
  const auto free_run = ex::run_commod(data, c);
  const double change = pulled.train.change_proportion;
  const double gap_pulled = gap_on_unflipped(pulled.model);
  const double gap_free = gap_on_unflipped(free_run.model);
  report(7, change < kMinimalChange && gap_free > gap_pulled, seconds_since(t0), 120,
         fmt("train changes %.4f (< 0.01); mean |g - f| on unflipped: ratio 0 %.4f > ratio 0.5 %.4f", change, gap_free,
             gap_pulled));
}

void criterion_concepts() {
  const auto t0 = Clock::now();
  double sp_reg = 0, sp_free = 0, cos_reg = 0, cos_free = 0, pr_reg = 0, pr_free = 0;
  for (int seed = 0; seed < 3; ++seed) {
    const auto cfg = synthetic_config(static_cast<std::uint64_t>(seed));
    const auto data = ex::prepare(cfg);
    auto c = cfg.commod;
    c.k = 2;
    c.lambda_sparsity = c.lambda_diversity = 0.1;
    const auto reg = ex::run_commod(data, c);
    c.lambda_sparsity = c.lambda_diversity = 0.0;
    const auto free_run = ex::run_commod(data, c);
    sp_reg += reg.sparsity.sparsity_fraction / 3;
    sp_free += free_run.sparsity.sparsity_fraction / 3;
    cos_reg += reg.max_cos / 3;
    cos_free += free_run.max_cos / 3;
    pr_reg += reg.test.p_rule / 3;
    pr_free += free_run.test.p_rule / 3;
  }
  const bool matched = std::abs(pr_reg - pr_free) <= kMatchTol;
  report(8, matched && sp_reg > sp_free && cos_reg < cos_free, seconds_since(t0), 300,
         fmt("sparsity %.3f vs %.3f, max |cos| %.3f vs %.3f", sp_reg, sp_free, cos_reg, cos_free) +
             fmt(" (P-Rule %.3f vs %.3f)", pr_reg, pr_free));
}

void criterion_locality(const EfficacyRuns& runs) {
  const auto t0 = Clock::now();
  // Closest (P-Rule, accuracy) pair among seed-0 runs where both models change something.
  double best = std::numeric_limits<double>::infinity();
  std::size_t bc = 0, ba = 0;
  for (std::size_t i = 0; i < runs.commod_seed0.size(); ++i) {
    for (std::size_t j = 0; j < runs.adv_seed0.size(); ++j) {
      const auto& c = runs.commod_seed0[i].test;
      const auto& a = runs.adv_seed0[j].test;
      if (c.change_proportion == 0.0 || a.change_proportion == 0.0) continue;
      const double d = std::max(std::abs(c.p_rule - a.p_rule), std::abs(c.accuracy - a.accuracy));
      if (d < best) {
        best = d;
        bc = i;
        ba = j;
      }
    }
  }
  if (!std::isfinite(best) || best > kMatchTol) {
    report(9, false, seconds_since(t0) + runs.seconds, 300,
           fmt("no COMMOD/AdvDebias pair matched within 0.05 on P-Rule and accuracy (closest gap %.3f)", best));
    return;
  }
  const auto& c = runs.commod_seed0[bc];
  const auto& a = runs.adv_seed0[ba];
  interp::LocalityOptions o;
  o.seeds = 5;
  const auto rows = interp::locality_curve({{"commod", c.yhat_f_test, c.yhat_g_test}, {"advdebias", a.yhat_f_test, a.yhat_g_test}},
                                           runs.data_seed0->test.X, {3}, o);
  report(9, rows[0].mean_f1 > rows[1].mean_f1, seconds_since(t0) + runs.seconds, 300,
         fmt("depth-3 F1 COMMOD %.3f vs AdvDebias %.3f", rows[0].mean_f1, rows[1].mean_f1) +
             fmt(" (lambda %.1f vs %.1f, P-Rule %.3f vs %.3f)", c.model.config.lambda_fair, a.model.config.lambda_fair,
                 c.test.p_rule, a.test.p_rule));
}

// ---- 10: sensitivity ---------------------------------------------------------

void criterion_sensitivity() {
  const auto t0 = Clock::now();
  ex::RunConfig cfg;
  cfg.synthetic = true;
  ex::SensitivityOptions o;  // 20 seeds, lambda_fair {0.5, 1, 1.5}, lambda_ratio {0.01, 0.05, 0.1}
  const auto rep = ex::sensitivity(cfg, o);
  // A constant outcome makes R^2 = 1 by convention; it carries no evidence.
  auto varies = [&](auto field) {
    for (const auto& r : rep.rows) {
      if (field(r) != field(rep.rows.front())) return true;
    }
    return false;
  };
  const bool dist_varies = varies([](const ex::SensitivityRow& r) { return r.dist; });
  const bool acc_varies = varies([](const ex::SensitivityRow& r) { return r.acc_g; });
  const bool fair_varies = varies([](const ex::SensitivityRow& r) { return r.fair_g; });
  const bool fits = rep.dist.r_squared > kMinR2 && rep.accuracy.r_squared > kMinR2 && rep.fairness.r_squared > kMinR2;
  double max_dist = 0.0;
  for (const auto& r : rep.rows) max_dist = std::max(max_dist, r.dist);
  std::string detail = fmt("R^2 dist %.3f, accuracy %.3f, fairness %.3f; max change proportion %.4f", rep.dist.r_squared,
                           rep.accuracy.r_squared, rep.fairness.r_squared, max_dist);
  if (!dist_varies) detail += "; dist is constant across runs, so its fit is vacuous";
  report(10, fits && dist_varies && acc_varies && fair_varies, seconds_since(t0), 600, detail);
}

// ---- 11: datasets --------------------------------------------------------------

void criterion_datasets() {
  const char* law = std::getenv("COMMOD_LAW_CSV");
  const char* law_schema = std::getenv("COMMOD_LAW_SCHEMA");
  const char* compas = std::getenv("COMMOD_COMPAS_CSV");
  const char* compas_schema = std::getenv("COMMOD_COMPAS_SCHEMA");
  if (!law || !law_schema || !compas || !compas_schema) {
    std::printf("criterion 11: SKIP  dataset reproduction needs COMMOD_LAW_CSV/COMMOD_LAW_SCHEMA and "
                "COMMOD_COMPAS_CSV/COMMOD_COMPAS_SCHEMA\n");
    return;
  }
  const auto t0 = Clock::now();
  auto base_check = [](const char* csv, const char* schema, double pr, double acc, ex::PreparedData& data,
                       ex::RunConfig& cfg) {
    cfg.data_path = csv;
    cfg.schema_path = schema;
    data = ex::prepare(cfg);
    const auto yf = basemodel::threshold(basemodel::predict_proba(*data.base, data.test.X));
    const double p = metrics::p_rule(yf, data.test.s);
    const double a = metrics::accuracy(yf, data.test.y);
    std::printf("  base model on %s: P-Rule %.4f accuracy %.4f\n", csv, p, a);
    return std::abs(p - pr) <= kReproTol && std::abs(a - acc) <= kReproTol;
  };
  ex::RunConfig law_cfg, compas_cfg;
  ex::PreparedData law_data, compas_data;
  const bool law_ok = base_check(law, law_schema, 0.2764, 0.7970, law_data, law_cfg);
  const bool compas_ok = base_check(compas, compas_schema, 0.6310, 0.6580, compas_data, compas_cfg);
  ex::SweepGrid grid;
  grid.lambda_fair = {0.5, 1.0, 1.5};
  grid.lambda_ratio = {0.01, 0.05, 0.1};
  grid.seeds = {0, 1, 2};
  const auto sweep = ex::sweep(law_data, law_cfg.commod, grid, 0, interp::builtin_grid("law_dp"));
  double cell = std::numeric_limits<double>::quiet_NaN();
  for (const auto& q : sweep.table) {
    if (q.fair_quartile == 1 && q.acc_quartile == 4 && q.count > 0) cell = q.mean_change;
  }
  const bool cell_ok = std::isfinite(cell) && std::abs(cell - 0.01) <= kReproTol;
  report(11, law_ok && compas_ok && cell_ok, seconds_since(t0), 3600,
         fmt("base models within +-0.05: law %.0f compas %.0f; Law Q1/Q4 change %.4f (target 0.01)", law_ok, compas_ok,
             cell));
}

}  // namespace

int main() {
  log::ScopedSilence quiet;
  auto guarded = [](int id, const std::function<void()>& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      ++failures;
      std::printf("criterion %d: FAIL  error: %s\n", id, e.what());
    }
  };
  guarded(1, criterion_gradients);
  guarded(2, [] { criterion_suite(2, ex::verify_identity_suite, 5, kIdentityTol, "change identity"); });
  guarded(3, [] { criterion_suite(3, ex::verify_boc_suite, 60, kBocTol, "BOC optimality, both pairings"); });
  guarded(4, [] { criterion_suite(4, ex::verify_dp_flip_suite, 60, 1.0, "DP extreme-flip dominance"); });
  guarded(5, [] { criterion_suite(5, ex::verify_dm_suite, 5, 1.0, "DM endpoint rule"); });
  std::optional<EfficacyRuns> runs;
  guarded(6, [&] {
    runs = efficacy_runs();
    criterion_efficacy(*runs);
  });
  guarded(7, criterion_minimal_change);
  guarded(8, criterion_concepts);
  guarded(9, [&] {
    if (!runs) throw std::runtime_error("efficacy runs unavailable");
    criterion_locality(*runs);
  });
  guarded(10, criterion_sensitivity);
  guarded(11, criterion_datasets);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
