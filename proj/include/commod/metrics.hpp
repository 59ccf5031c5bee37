#pragma once

#include <span>
#include <string>
#include <vector>

#include "commod/mat.hpp"

namespace commod::metrics {

/// Aligned per-row labels, groups and the two models' predictions.
struct PredictionTable {
  std::vector<int> y;
  std::vector<int> s;
  std::vector<int> yhat_f;
  std::vector<int> yhat_g;
  std::vector<double> score_f;  // optional
  std::vector<double> score_g;  // optional

  std::size_t size() const { return s.size(); }
  void validate() const;
};

struct FairnessReport {
  double p_rule = 0.0;
  double dm = 0.0;
  double delta_tpr = 0.0;
  double delta_fpr = 0.0;
  double accuracy = 0.0;
  double change_proportion = 0.0;
};

/// min(rate_1 / rate_0, rate_0 / rate_1) over positive-prediction rates.
/// Both rates zero gives 1; exactly one zero gives 0.
double p_rule(std::span<const int> yhat, std::span<const int> s);

struct Mistreatment {
  double delta_tpr = 0.0;
  double delta_fpr = 0.0;
  double dm = 0.0;
};

/// Empty (s, y) cells contribute a rate of 0 and a warning.
Mistreatment disparate_mistreatment(std::span<const int> yhat, std::span<const int> y,
                                    std::span<const int> s);

double accuracy(std::span<const int> yhat, std::span<const int> y);
double change_proportion(std::span<const int> yhat_f, std::span<const int> yhat_g);

/// Report for the g column (change proportion measured against f).
FairnessReport fairness_report(const PredictionTable& table);
/// Report for the f column alone (change proportion 0).
FairnessReport base_report(const PredictionTable& table);

struct CalibrationBin {
  double lower = 0.0;
  double upper = 0.0;
  double mean_f = 0.0;  // NaN when the bin is empty
  double mean_g = 0.0;
  std::size_t count = 0;
};

/// Equal-width bins over [0, 1] on score_f.
std::vector<CalibrationBin> calibration_table(std::span<const double> score_f,
                                              std::span<const double> score_g, int bins);

struct Sparsity {
  std::size_t active_count = 0;    // entries with |w| > eps
  double sparsity_fraction = 0.0;  // 1 - active / (k * d); higher is sparser
};

Sparsity concept_sparsity(const Mat& W, double eps = 0.01);

/// Jaccard index of the signed supports {(j, sign w_j) : |w_j| > eps}.
double concept_jaccard(std::span<const double> wi, std::span<const double> wj, double eps = 0.01);

/// Largest |cos| between any two rows (0 for a single row or zero rows).
double max_abs_cosine(const Mat& W);

struct OlsFit {
  std::vector<double> coefficients;  // intercept first, then one per column
  double r_squared = 0.0;
};

/// Least squares with an intercept column via the normal equations. Throws on
/// rank deficiency, naming the offending columns.
OlsFit ols_fit(const Mat& X, std::span<const double> y, const std::vector<std::string>& column_names = {});

}  // namespace commod::metrics
