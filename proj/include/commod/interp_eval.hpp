#pragma once

// Interpretability of changes: depth-limited trees fitted to change labels
// (locality), quartile segmentation of (fairness, accuracy) space, and the
// tree-approximated post-hoc comparison.

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "commod/debias.hpp"
#include "commod/kernels.hpp"
#include "commod/mat.hpp"

namespace commod::interp {

inline constexpr int kUncapped = std::numeric_limits<int>::max();

struct TreeNode {
  bool leaf = true;
  std::size_t feature = 0;
  double threshold = 0.0;  // go left when x[feature] <= threshold
  std::size_t left = 0;
  std::size_t right = 0;
  std::size_t count0 = 0;  // classification: label counts reaching the node
  std::size_t count1 = 0;
  double value = 0.0;      // leaf output: 1/0 for classification, mean for regression
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  int max_depth = 1;

  double predict_row(std::span<const double> x) const;
  std::vector<double> predict(const Mat& X) const;
  int depth() const;
};

/// Gini CART. Splits at midpoints of sorted unique values; an impure node is
/// split while any split exists, even a zero-gain one. Ties between equally
/// good splits go to the first feature in a seed-shuffled order.
DecisionTree fit_tree(const Mat& X, std::span<const int> labels, int max_depth, std::uint64_t seed = 0);

/// Variance-reduction regression tree, same split rules.
DecisionTree fit_regression_tree(const Mat& X, std::span<const double> target, int max_depth,
                                 std::uint64_t seed = 0);

/// F1 of the positive class. 1 when there are neither positives nor positive predictions.
double f1_score(std::span<const int> predicted, std::span<const int> labels);
double tree_f1(const DecisionTree& tree, const Mat& X, std::span<const int> labels);

struct ChangeModel {
  std::string name;
  std::vector<int> yhat_f;
  std::vector<int> yhat_g;
};

struct LocalityRow {
  std::string model;
  int depth = 0;
  double mean_f1 = 0.0;
  double std_f1 = 0.0;  // population std over seeds
  bool degenerate = false;  // no changes at all
};

struct LocalityOptions {
  int seeds = 5;
  bool bootstrap = true;  // resample rows per seed; off leaves only the tie-break order varying
  std::uint64_t base_seed = 0;
  kernels::Exec exec = kernels::Exec::parallel;
};

/// Fits a tree on 1[yhat_g != yhat_f] per (model, depth, seed) and scores it on all rows.
std::vector<LocalityRow> locality_curve(const std::vector<ChangeModel>& models, const Mat& X,
                                        const std::vector<int>& depths, const LocalityOptions& options = {});

enum class SignalKind { ratio_deviation, additive_logit };

struct PosthocRow {
  int depth = 0;
  double approx_p_rule = 0.0;  // from the tree-approximated signal
  double self_p_rule = 0.0;    // exact signal, no approximation
  double base_p_rule = 0.0;
};

/// ratio_deviation: signal = r - 1, predictions 1[(1 + signal) f_logit > 0].
/// additive_logit: predictions 1[f_logit + signal > 0].
std::vector<PosthocRow> posthoc_compare(const Mat& X, std::span<const double> flogit, std::span<const int> s,
                                        std::span<const double> signal, SignalKind kind,
                                        const std::vector<int>& depths);

/// Self-test arm: the model's own r - 1 as the signal.
std::vector<PosthocRow> posthoc_compare(const debias::TrainedCommod& trained, const Mat& X,
                                        std::span<const double> flogit, std::span<const int> s,
                                        const std::vector<int>& depths);

enum class Orientation { higher_fair_better, lower_fair_better };

struct SegmentGrid {
  std::string name;
  std::array<double, 3> fairness_edges{};
  std::array<double, 3> accuracy_edges{};
  Orientation orientation = Orientation::higher_fair_better;

  void validate() const;
};

struct Segment {
  int fair_quartile = 1;  // 1..4, Q4 the fairest
  int acc_quartile = 1;   // 1..4, Q4 the most accurate
};

/// Higher-better fairness and accuracy use [lo, hi) cells with Q4 = [e3, 1].
/// Lower-better fairness uses (lo, hi] cells with Q4 = [0, e1].
Segment segment_assign(double fairness, double accuracy, const SegmentGrid& grid);

/// Grids of the four reference tables: law_dp, law_eo, compas_dp, compas_eo.
SegmentGrid builtin_grid(const std::string& name);
std::vector<std::string> builtin_grid_names();

/// Quartile edges (linear-interpolated 25/50/75 percentiles) of a method's results.
SegmentGrid grid_from_results(std::span<const double> fairness, std::span<const double> accuracy,
                              Orientation orientation, const std::string& name = "custom");

}  // namespace commod::interp
