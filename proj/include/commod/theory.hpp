#pragma once

// Exact finite-support versions of the cost-sensitive view of minimal-change
// debiasing: risks, the fairness-aware Bayes-optimal classifier, and the
// flip-budget optima for P-Rule and Disparate Mistreatment, each with a
// brute-force counterpart.

#include <cstdint>
#include <span>
#include <vector>

#include "commod/kernels.hpp"
#include "commod/metrics.hpp"

namespace commod::theory {

struct DistPoint {
  double weight = 0.0;
  double eta = 0.0;       // P(Y=1 | x)
  double eta_bar = 0.0;   // P(S=1 | x)
  double eta_star = 0.0;  // P(Yhat_f=1 | x)
};

struct FiniteDistribution {
  std::vector<DistPoint> points;
  double pi = 0.0;
  double pi_bar = 0.0;
  double pi_star = 0.0;

  std::size_t size() const { return points.size(); }
  /// Fills the priors from the points.
  static FiniteDistribution from_points(std::vector<DistPoint> points);
  /// Weights sum to 1, probabilities in [0, 1], priors consistent (to tol).
  void validate(double tol = 1e-9) const;
};

/// Which conditional defines FNR/FPR: eta, eta_bar or eta_star.
enum class Target { Y, S, F };

/// semantic: lambda_fair on the S term, lambda_ratio on the f term.
/// strict_paper: the two multipliers swapped.
enum class Pairing { semantic, strict_paper };

/// How the S and f terms of the Lagrangian are weighted. prior_weighted is
/// the form whose exact minimizer is the thresholded s*; balanced drops the
/// priors and is kept for comparison only.
enum class TermForm { prior_weighted, balanced };

struct CostSpec {
  double c = 0.5;
  double c_bar = 0.5;
  double c_star = 0.5;
  double lambda_fair = 0.0;
  double lambda_ratio = 0.0;
  Pairing pairing = Pairing::semantic;
  TermForm term_form = TermForm::prior_weighted;

  void validate() const;
};

/// pi (1-c) FNR + (1-pi) c FPR, or (1-c) FNR + c FPR when balanced.
double cs_risk(std::span<const double> g, const FiniteDistribution& dist, Target target, double c,
               bool balanced = false);

/// CS(g; Y, c) - l1 CS(g; S, c_bar) - l2 CS(g; F, c_star) with (l1, l2) set by the pairing.
double lagrangian_risk(std::span<const double> g, const FiniteDistribution& dist, const CostSpec& costs);

/// s*(x) per point.
std::vector<double> boc_score(const FiniteDistribution& dist, const CostSpec& costs);

/// 1 where s* > 0, alpha where s* = 0, 0 otherwise.
std::vector<double> boc(const FiniteDistribution& dist, const CostSpec& costs, double alpha = 0.0);

struct ExhaustiveMinimum {
  std::uint64_t mask = 0;  // bit i set: point i classified 1
  double risk = 0.0;
};

/// Minimum of lagrangian_risk over all 2^m deterministic classifiers (m <= 24).
ExhaustiveMinimum exhaustive_min_risk(const FiniteDistribution& dist, const CostSpec& costs,
                                      kernels::Exec exec = kernels::Exec::parallel);

struct ChangeIdentity {
  double lhs = 0.0;
  double rhs = 0.0;
  bool equal = false;
};

/// lhs = P(Yhat_f != Yhat). Default rhs conditions on Yhat:
///   P(Yhat=1) P(Yhat_f=0 | Yhat=1) + P(Yhat=0) P(Yhat_f=1 | Yhat=0).
/// conditioning_on_f gives the variant that conditions on Yhat_f instead:
///   (1 - c*) P(Yhat=0 | Yhat_f=1) + c* P(Yhat=1 | Yhat_f=0), c* = P(Yhat=1),
/// which is not an identity in general.
ChangeIdentity verify_change_identity(const metrics::PredictionTable& table, bool conditioning_on_f = false);

/// Counts by (yhat_f, s): g_ys.
struct FlipTable {
  std::int64_t g11 = 0;  // yhat 1, s 1
  std::int64_t g01 = 0;  // yhat 0, s 1
  std::int64_t g10 = 0;  // yhat 1, s 0
  std::int64_t g00 = 0;  // yhat 0, s 0

  std::int64_t s1() const { return g11 + g01; }
  std::int64_t s0() const { return g10 + g00; }
  std::int64_t n() const { return s1() + s0(); }
  double C() const { return static_cast<double>(s0()) / static_cast<double>(s1()); }
  void validate() const;
  /// True when group s=1 has the lower (or equal) positive rate.
  bool group1_disadvantaged() const;
  double p_rule() const;
  static FlipTable from_predictions(std::span<const int> yhat, std::span<const int> s);
};

/// P-Rule from integer counts, exact up to one final rounding.
double p_rule_counts(std::int64_t g11, std::int64_t g01, std::int64_t g10, std::int64_t g00);

enum class Extreme { none, all_a, all_b };

struct FlipAllocation {
  double best_p_rule = 0.0;
  Extreme extreme = Extreme::none;
  // (a): flips 0 -> 1 in the disadvantaged group; (b): flips 1 -> 0 in the advantaged group.
  std::int64_t flips_a = 0;
  std::int64_t flips_b = 0;
};

/// Better of the two extreme allocations of K flips. When one side lacks
/// instances the remainder spills over to the other side.
FlipAllocation max_prule_k_flips(const FlipTable& table, std::int64_t K);

struct SwitchingPoint {
  std::int64_t K = 0;
  bool reachable = true;  // false: returned the flip cap instead
  double tolerance = 0.0;
};

/// Smallest K at which an (a)/(b) allocation lifts the disadvantaged-to-
/// advantaged rate ratio to >= 1 - tol (tol = 1/n by default).
SwitchingPoint switching_point(const FlipTable& table);

/// Best P-Rule over every subset of exactly K instances whose predictions are flipped.
kernels::MaskOptimum brute_force_k_flips(const FlipTable& table, unsigned K,
                                         kernels::Exec exec = kernels::Exec::parallel);

/// N_{s,y}.
struct GroupLabelCounts {
  std::int64_t n01 = 0;  // s 0, y 1
  std::int64_t n11 = 0;
  std::int64_t n00 = 0;
  std::int64_t n10 = 0;
};

struct DmOptimum {
  double gamma = 0.0;
  double delta = 0.0;
  std::int64_t x_opt = 0;
  bool any_x = false;  // gamma == delta: every x in [0, K] is optimal
  double predicted_dm = 0.0;
};

/// DM(x) = max(0, (dTPR + dFPR - delta K) + (delta - gamma) x).
double dm_model(const GroupLabelCounts& n, double delta_tpr, double delta_fpr, std::int64_t K, std::int64_t x);

DmOptimum min_dm_k_flips(const GroupLabelCounts& n, double delta_tpr, double delta_fpr, std::int64_t K);

}  // namespace commod::theory
