#include "commod/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "commod/error.hpp"

namespace commod::theory {

FiniteDistribution FiniteDistribution::from_points(std::vector<DistPoint> points) {
  FiniteDistribution d;
  d.points = std::move(points);
  for (const auto& p : d.points) {
    d.pi += p.weight * p.eta;
    d.pi_bar += p.weight * p.eta_bar;
    d.pi_star += p.weight * p.eta_star;
  }
  return d;
}

void FiniteDistribution::validate(double tol) const {
  if (points.empty()) throw Error("distribution: no support points");
  double total = 0.0, pi_c = 0.0, pib_c = 0.0, pis_c = 0.0;
  auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
  for (const auto& p : points) {
    if (!in01(p.weight) || !in01(p.eta) || !in01(p.eta_bar) || !in01(p.eta_star)) {
      throw Error("distribution: probabilities must lie in [0, 1]");
    }
    total += p.weight;
    pi_c += p.weight * p.eta;
    pib_c += p.weight * p.eta_bar;
    pis_c += p.weight * p.eta_star;
  }
  if (std::abs(total - 1.0) > tol) throw Error("distribution: weights do not sum to 1");
  if (std::abs(pi_c - pi) > tol || std::abs(pib_c - pi_bar) > tol || std::abs(pis_c - pi_star) > tol) {
    throw Error("distribution: priors inconsistent with the per-point probabilities");
  }
}

void CostSpec::validate() const {
  for (double v : {c, c_bar, c_star}) {
    if (!(v > 0.0 && v < 1.0)) throw Error("costs must lie strictly inside (0, 1)");
  }
  if (!std::isfinite(lambda_fair) || !std::isfinite(lambda_ratio)) throw Error("multipliers must be finite");
}

namespace {

double eta_of(const DistPoint& p, Target t) {
  switch (t) {
    case Target::Y: return p.eta;
    case Target::S: return p.eta_bar;
    case Target::F: return p.eta_star;
  }
  return 0.0;
}

double prior_of(const FiniteDistribution& d, Target t) {
  switch (t) {
    case Target::Y: return d.pi;
    case Target::S: return d.pi_bar;
    case Target::F: return d.pi_star;
  }
  return 0.0;
}

std::pair<double, double> multipliers(const CostSpec& costs) {
  if (costs.pairing == Pairing::semantic) return {costs.lambda_fair, costs.lambda_ratio};
  return {costs.lambda_ratio, costs.lambda_fair};
}

}  // namespace

double cs_risk(std::span<const double> g, const FiniteDistribution& dist, Target target, double c, bool balanced) {
  if (g.size() != dist.size()) throw Error("cs_risk: classifier length does not match the support");
  const double pi = prior_of(dist, target);
  if (pi <= 0.0 || pi >= 1.0) throw Error("cs_risk: degenerate conditioning, target prior is 0 or 1");
  double miss = 0.0, false_alarm = 0.0;  // E[eta (1-g)], E[(1-eta) g]
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g[i] < 0.0 || g[i] > 1.0) throw Error("cs_risk: classifier values must lie in [0, 1]");
    const double e = eta_of(dist.points[i], target);
    miss += dist.points[i].weight * e * (1.0 - g[i]);
    false_alarm += dist.points[i].weight * (1.0 - e) * g[i];
  }
  const double fnr = miss / pi;
  const double fpr = false_alarm / (1.0 - pi);
  if (balanced) return (1.0 - c) * fnr + c * fpr;
  return pi * (1.0 - c) * fnr + (1.0 - pi) * c * fpr;
}

double lagrangian_risk(std::span<const double> g, const FiniteDistribution& dist, const CostSpec& costs) {
  const auto [l_s, l_f] = multipliers(costs);
  const bool bal = costs.term_form == TermForm::balanced;
  return cs_risk(g, dist, Target::Y, costs.c) - l_s * cs_risk(g, dist, Target::S, costs.c_bar, bal) -
         l_f * cs_risk(g, dist, Target::F, costs.c_star, bal);
}

std::vector<double> boc_score(const FiniteDistribution& dist, const CostSpec& costs) {
  const auto [l_s, l_f] = multipliers(costs);
  std::vector<double> s(dist.size());
  for (std::size_t i = 0; i < dist.size(); ++i) {
    const auto& p = dist.points[i];
    s[i] = p.eta - costs.c - l_s * (p.eta_bar - costs.c_bar) - l_f * (p.eta_star - costs.c_star);
  }
  return s;
}

std::vector<double> boc(const FiniteDistribution& dist, const CostSpec& costs, double alpha) {
  auto s = boc_score(dist, costs);
  for (double& v : s) v = v > 0.0 ? 1.0 : (v == 0.0 ? alpha : 0.0);
  return s;
}

ExhaustiveMinimum exhaustive_min_risk(const FiniteDistribution& dist, const CostSpec& costs, kernels::Exec exec) {
  const std::size_t m = dist.size();
  if (m > 24) throw Error("exhaustive_min_risk: support too large for enumeration");
  auto eval = [&](std::uint64_t mask) {
    std::vector<double> g(m);
    for (std::size_t i = 0; i < m; ++i) g[i] = (mask >> i) & 1U ? 1.0 : 0.0;
    return lagrangian_risk(g, dist, costs);
  };
  const auto best = kernels::min_over_masks(static_cast<unsigned>(m), eval, exec);
  return {best.mask, best.value};
}

ChangeIdentity verify_change_identity(const metrics::PredictionTable& table, bool conditioning_on_f) {
  const auto& f = table.yhat_f;
  const auto& g = table.yhat_g;
  if (f.size() != g.size()) throw Error("verify_change_identity: prediction columns differ in length");
  ChangeIdentity out;
  const std::size_t n = f.size();
  if (n == 0) {
    out.equal = true;
    return out;
  }
  // joint[a][b] = #{Yhat_f = a, Yhat = b}
  double joint[2][2] = {{0, 0}, {0, 0}};
  for (std::size_t i = 0; i < n; ++i) joint[f[i]][g[i]] += 1.0;
  const double N = static_cast<double>(n);
  out.lhs = (joint[0][1] + joint[1][0]) / N;
  const double g1 = joint[0][1] + joint[1][1];
  const double g0 = joint[0][0] + joint[1][0];
  auto cond = [](double num, double den) { return den > 0.0 ? num / den : 0.0; };
  if (!conditioning_on_f) {
    out.rhs = (g1 / N) * cond(joint[0][1], g1) + (g0 / N) * cond(joint[1][0], g0);
  } else {
    const double c_star = g1 / N;
    const double f1 = joint[1][0] + joint[1][1];
    const double f0 = joint[0][0] + joint[0][1];
    out.rhs = (1.0 - c_star) * cond(joint[1][0], f1) + c_star * cond(joint[0][1], f0);
  }
  out.equal = std::abs(out.lhs - out.rhs) < 1e-12;
  return out;
}

void FlipTable::validate() const {
  if (g11 < 0 || g01 < 0 || g10 < 0 || g00 < 0) throw Error("flip table: counts must be nonnegative");
  if (s1() <= 0 || s0() <= 0) throw Error("flip table: both groups must be nonempty");
}

bool FlipTable::group1_disadvantaged() const { return g11 * s0() <= g10 * s1(); }

double p_rule_counts(std::int64_t g11, std::int64_t g01, std::int64_t g10, std::int64_t g00) {
  const std::int64_t s1 = g11 + g01, s0 = g10 + g00;
  // rate1 / rate0 = (g11 s0) / (g10 s1)
  const std::int64_t a = g11 * s0, b = g10 * s1;
  const std::int64_t lo = std::min(a, b), hi = std::max(a, b);
  if (hi == 0) return 1.0;
  return static_cast<double>(lo) / static_cast<double>(hi);
}

double FlipTable::p_rule() const { return p_rule_counts(g11, g01, g10, g00); }

FlipTable FlipTable::from_predictions(std::span<const int> yhat, std::span<const int> s) {
  if (yhat.size() != s.size()) throw Error("flip table: predictions and groups differ in length");
  FlipTable t;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == 1) (yhat[i] == 1 ? t.g11 : t.g01)++;
    else (yhat[i] == 1 ? t.g10 : t.g00)++;
  }
  t.validate();
  return t;
}

namespace {

// The table seen from the disadvantaged group: d1/d0 are its positive and
// negative counts, a1/a0 the advantaged group's.
struct Oriented {
  std::int64_t d1, d0, a1, a0;
  bool mirrored;
};

Oriented orient(const FlipTable& t) {
  if (t.group1_disadvantaged()) return {t.g11, t.g01, t.g10, t.g00, false};
  return {t.g10, t.g00, t.g11, t.g01, true};
}

double oriented_prule(const Oriented& o, std::int64_t a, std::int64_t b) {
  return p_rule_counts(o.d1 + a, o.d0 - a, o.a1 - b, o.a0 + b);
}

}  // namespace

FlipAllocation max_prule_k_flips(const FlipTable& table, std::int64_t K) {
  table.validate();
  if (K < 0) throw Error("max_prule_k_flips: K must be nonnegative");
  const Oriented o = orient(table);
  const std::int64_t cap_a = o.d0, cap_b = o.a1;
  if (K > cap_a + cap_b) throw Error("insufficient flippable instances");
  FlipAllocation out;
  if (K == 0) {
    out.best_p_rule = table.p_rule();
    return out;
  }
  const std::int64_t a_hi = std::min(K, cap_a);
  const std::int64_t a_lo = std::max<std::int64_t>(0, K - cap_b);
  const double pa = oriented_prule(o, a_hi, K - a_hi);
  const double pb = oriented_prule(o, a_lo, K - a_lo);
  if (pa >= pb) {
    out = {pa, Extreme::all_a, a_hi, K - a_hi};
  } else {
    out = {pb, Extreme::all_b, a_lo, K - a_lo};
  }
  return out;
}

SwitchingPoint switching_point(const FlipTable& table) {
  table.validate();
  const Oriented o = orient(table);
  const std::int64_t n = table.n();
  const std::int64_t s_d = o.d1 + o.d0, s_a = o.a1 + o.a0;
  SwitchingPoint out;
  out.tolerance = 1.0 / static_cast<double>(n);
  // ratio = ((d1 + a) / s_d) / ((a1 - b) / s_a) >= 1 - 1/n  <=>  (d1 + a) s_a n >= (a1 - b) s_d (n - 1)
  auto reaches = [&](std::int64_t a, std::int64_t b) {
    const std::int64_t num = (o.d1 + a) * s_a;
    const std::int64_t den = (o.a1 - b) * s_d;
    if (den == 0) return true;
    return num * n >= den * (n - 1);
  };
  const std::int64_t cap_a = o.d0, cap_b = o.a1;
  for (std::int64_t K = 0; K <= cap_a + cap_b; ++K) {
    const std::int64_t a_hi = std::min(K, cap_a);
    const std::int64_t a_lo = std::max<std::int64_t>(0, K - cap_b);
    if (reaches(a_hi, K - a_hi) || reaches(a_lo, K - a_lo)) {
      out.K = K;
      return out;
    }
  }
  out.K = cap_a + cap_b;
  out.reachable = false;
  return out;
}

kernels::MaskOptimum brute_force_k_flips(const FlipTable& table, unsigned K, kernels::Exec exec) {
  table.validate();
  const std::int64_t n = table.n();
  if (n > 24) throw Error("brute_force_k_flips: table too large for enumeration");
  if (K > n) throw Error("insufficient flippable instances");
  // Instance order: g11 rows, g01 rows, g10 rows, g00 rows.
  const auto e11 = table.g11, e01 = e11 + table.g01, e10 = e01 + table.g10;
  auto eval = [&](std::uint64_t mask) {
    std::int64_t g11 = table.g11, g01 = table.g01, g10 = table.g10, g00 = table.g00;
    for (std::int64_t i = 0; i < n; ++i) {
      if (!((mask >> i) & 1U)) continue;
      if (i < e11) { --g11; ++g01; }
      else if (i < e01) { --g01; ++g11; }
      else if (i < e10) { --g10; ++g00; }
      else { --g00; ++g10; }
    }
    return p_rule_counts(g11, g01, g10, g00);
  };
  return kernels::max_over_k_subsets(static_cast<unsigned>(n), K, eval, exec);
}

double dm_model(const GroupLabelCounts& n, double delta_tpr, double delta_fpr, std::int64_t K, std::int64_t x) {
  const double gamma = 1.0 / static_cast<double>(std::min(n.n01, n.n11));
  const double delta = 1.0 / static_cast<double>(std::min(n.n00, n.n10));
  const double v = (delta_tpr + delta_fpr - delta * static_cast<double>(K)) + (delta - gamma) * static_cast<double>(x);
  return std::max(0.0, v);
}

DmOptimum min_dm_k_flips(const GroupLabelCounts& n, double delta_tpr, double delta_fpr, std::int64_t K) {
  if (n.n01 <= 0 || n.n11 <= 0 || n.n00 <= 0 || n.n10 <= 0) throw Error("min_dm_k_flips: empty (s, y) cell");
  if (K < 1) throw Error("min_dm_k_flips: K must be at least 1");
  const std::int64_t min1 = std::min(n.n01, n.n11);
  const std::int64_t min0 = std::min(n.n00, n.n10);
  DmOptimum out;
  out.gamma = 1.0 / static_cast<double>(min1);
  out.delta = 1.0 / static_cast<double>(min0);
  // delta > gamma exactly when min0 < min1
  if (min0 < min1) {
    out.x_opt = 0;
  } else if (min0 > min1) {
    out.x_opt = K;
  } else {
    out.x_opt = 0;
    out.any_x = true;
  }
  out.predicted_dm = dm_model(n, delta_tpr, delta_fpr, K, out.x_opt);
  return out;
}

}  // namespace commod::theory
