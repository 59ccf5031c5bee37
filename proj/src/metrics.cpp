#include "commod/metrics.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <set>
#include <utility>

#include <Eigen/Dense>

#include "commod/error.hpp"
#include "commod/log.hpp"

namespace commod::metrics {
namespace {

void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw Error(std::string(what) + ": length mismatch");
}

void require_binary(std::span<const int> v, const char* what) {
  for (int x : v) {
    if (x != 0 && x != 1) throw Error(std::string(what) + ": entries must be 0/1");
  }
}

}  // namespace

void PredictionTable::validate() const {
  const std::size_t n = s.size();
  require_same_length(y.size(), n, "prediction table");
  require_same_length(yhat_f.size(), n, "prediction table");
  require_same_length(yhat_g.size(), n, "prediction table");
  require_binary(y, "prediction table");
  require_binary(s, "prediction table");
  require_binary(yhat_f, "prediction table");
  require_binary(yhat_g, "prediction table");
  auto check_scores = [&](const std::vector<double>& scores, const std::vector<int>& yhat) {
    if (scores.empty()) return;
    require_same_length(scores.size(), n, "prediction table");
    for (std::size_t i = 0; i < n; ++i) {
      if ((scores[i] > 0.5 ? 1 : 0) != yhat[i]) {
        throw Error("prediction table: thresholded column disagrees with its scores");
      }
    }
  };
  check_scores(score_f, yhat_f);
  check_scores(score_g, yhat_g);
}

double p_rule(std::span<const int> yhat, std::span<const int> s) {
  require_same_length(yhat.size(), s.size(), "p_rule");
  std::array<double, 2> pos{0, 0};
  std::array<double, 2> total{0, 0};
  for (std::size_t i = 0; i < s.size(); ++i) {
    total[s[i]] += 1;
    pos[s[i]] += yhat[i];
  }
  if (total[0] == 0 || total[1] == 0) throw Error("p_rule: a sensitive group is absent");
  const double r0 = pos[0] / total[0];
  const double r1 = pos[1] / total[1];
  if (r0 == 0.0 && r1 == 0.0) return 1.0;
  if (r0 == 0.0 || r1 == 0.0) return 0.0;
  return std::min(r1 / r0, r0 / r1);
}

Mistreatment disparate_mistreatment(std::span<const int> yhat, std::span<const int> y,
                                    std::span<const int> s) {
  require_same_length(yhat.size(), y.size(), "disparate_mistreatment");
  require_same_length(yhat.size(), s.size(), "disparate_mistreatment");
  // cells[s][y] = (count, predicted positive)
  std::array<std::array<double, 2>, 2> count{};
  std::array<std::array<double, 2>, 2> pos{};
  for (std::size_t i = 0; i < s.size(); ++i) {
    count[s[i]][y[i]] += 1;
    pos[s[i]][y[i]] += yhat[i];
  }
  auto rate = [&](int g, int label) {
    if (count[g][label] == 0) {
      log::warn("disparate mistreatment: empty cell (s=" + std::to_string(g) +
                ", y=" + std::to_string(label) + "); rate taken as 0");
      return 0.0;
    }
    return pos[g][label] / count[g][label];
  };
  Mistreatment m;
  m.delta_tpr = std::abs(rate(1, 1) - rate(0, 1));
  m.delta_fpr = std::abs(rate(1, 0) - rate(0, 0));
  m.dm = m.delta_tpr + m.delta_fpr;
  return m;
}

double accuracy(std::span<const int> yhat, std::span<const int> y) {
  require_same_length(yhat.size(), y.size(), "accuracy");
  if (y.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < y.size(); ++i) hit += yhat[i] == y[i] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(y.size());
}

double change_proportion(std::span<const int> yhat_f, std::span<const int> yhat_g) {
  require_same_length(yhat_f.size(), yhat_g.size(), "change_proportion");
  if (yhat_f.empty()) return 0.0;
  std::size_t changed = 0;
  for (std::size_t i = 0; i < yhat_f.size(); ++i) changed += yhat_f[i] != yhat_g[i] ? 1 : 0;
  return static_cast<double>(changed) / static_cast<double>(yhat_f.size());
}

FairnessReport fairness_report(const PredictionTable& t) {
  t.validate();
  FairnessReport r;
  r.p_rule = p_rule(t.yhat_g, t.s);
  const auto m = disparate_mistreatment(t.yhat_g, t.y, t.s);
  r.delta_tpr = m.delta_tpr;
  r.delta_fpr = m.delta_fpr;
  r.dm = m.dm;
  r.accuracy = accuracy(t.yhat_g, t.y);
  r.change_proportion = change_proportion(t.yhat_f, t.yhat_g);
  return r;
}

FairnessReport base_report(const PredictionTable& t) {
  PredictionTable copy = t;
  copy.yhat_g = t.yhat_f;
  copy.score_g = t.score_f;
  return fairness_report(copy);
}

std::vector<CalibrationBin> calibration_table(std::span<const double> score_f,
                                              std::span<const double> score_g, int bins) {
  if (bins < 2) throw Error("calibration_table: need at least 2 bins");
  require_same_length(score_f.size(), score_g.size(), "calibration_table");
  std::vector<CalibrationBin> out(static_cast<std::size_t>(bins));
  std::vector<double> sum_f(out.size(), 0.0), sum_g(out.size(), 0.0);
  for (std::size_t i = 0; i < score_f.size(); ++i) {
    auto b = static_cast<std::size_t>(std::floor(score_f[i] * bins));
    b = std::min(b, out.size() - 1);
    sum_f[b] += score_f[i];
    sum_g[b] += score_g[i];
    ++out[b].count;
  }
  for (std::size_t b = 0; b < out.size(); ++b) {
    out[b].lower = static_cast<double>(b) / bins;
    out[b].upper = static_cast<double>(b + 1) / bins;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    out[b].mean_f = out[b].count ? sum_f[b] / static_cast<double>(out[b].count) : nan;
    out[b].mean_g = out[b].count ? sum_g[b] / static_cast<double>(out[b].count) : nan;
  }
  return out;
}

Sparsity concept_sparsity(const Mat& W, double eps) {
  if (!(eps > 0.0)) throw Error("concept_sparsity: eps must be positive");
  Sparsity s;
  for (double w : W.data) s.active_count += std::abs(w) > eps ? 1 : 0;
  const double total = static_cast<double>(W.rows * W.cols);
  s.sparsity_fraction = total > 0 ? 1.0 - static_cast<double>(s.active_count) / total : 1.0;
  return s;
}

double concept_jaccard(std::span<const double> wi, std::span<const double> wj, double eps) {
  if (!(eps > 0.0)) throw Error("concept_jaccard: eps must be positive");
  require_same_length(wi.size(), wj.size(), "concept_jaccard");
  auto support = [eps](std::span<const double> w) {
    std::set<std::pair<std::size_t, int>> out;
    for (std::size_t j = 0; j < w.size(); ++j) {
      if (std::abs(w[j]) > eps) out.insert({j, w[j] > 0 ? 1 : -1});
    }
    return out;
  };
  const auto a = support(wi);
  const auto b = support(wj);
  if (a.empty() && b.empty()) {
    log::warn("concept_jaccard: both concepts are empty at this threshold");
    return 0.0;
  }
  std::size_t inter = 0;
  for (const auto& e : a) inter += b.count(e);
  const std::size_t uni = a.size() + b.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double max_abs_cosine(const Mat& W) {
  double worst = 0.0;
  for (std::size_t i = 0; i < W.rows; ++i) {
    for (std::size_t j = i + 1; j < W.rows; ++j) {
      double dot = 0.0, ni = 0.0, nj = 0.0;
      for (std::size_t c = 0; c < W.cols; ++c) {
        dot += W(i, c) * W(j, c);
        ni += W(i, c) * W(i, c);
        nj += W(j, c) * W(j, c);
      }
      if (ni == 0.0 || nj == 0.0) continue;
      worst = std::max(worst, std::abs(dot) / std::sqrt(ni * nj));
    }
  }
  return worst;
}

OlsFit ols_fit(const Mat& X, std::span<const double> y, const std::vector<std::string>& column_names) {
  require_same_length(X.rows, y.size(), "ols_fit");
  const std::size_t n = X.rows;
  const std::size_t p = X.cols + 1;
  if (n <= p - 1) throw Error("ols_fit: need more rows than columns");
  Eigen::MatrixXd A(n, p);
  Eigen::VectorXd b(n);
  for (std::size_t i = 0; i < n; ++i) {
    A(i, 0) = 1.0;
    for (std::size_t j = 0; j < X.cols; ++j) A(i, j + 1) = X(i, j);
    b(i) = y[i];
  }
  auto name = [&](std::size_t col) -> std::string {
    if (col == 0) return "intercept";
    if (col - 1 < column_names.size()) return column_names[col - 1];
    return "x" + std::to_string(col - 1);
  };

  // Rank check on the design; the pivots outside the rank are the collinear columns.
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  qr.setThreshold(1e-10);
  const auto rank = static_cast<std::size_t>(qr.rank());
  if (rank < p) {
    std::string cols;
    const auto& perm = qr.colsPermutation().indices();
    for (std::size_t k = rank; k < p; ++k) {
      if (!cols.empty()) cols += ", ";
      cols += name(static_cast<std::size_t>(perm(static_cast<Eigen::Index>(k))));
    }
    throw Error("ols_fit: design matrix is rank-deficient; collinear columns: " + cols);
  }

  const Eigen::MatrixXd gram = A.transpose() * A;
  const Eigen::VectorXd rhs = A.transpose() * b;
  const Eigen::VectorXd beta = gram.ldlt().solve(rhs);

  OlsFit fit;
  fit.coefficients.assign(beta.data(), beta.data() + beta.size());
  const Eigen::VectorXd resid = b - A * beta;
  const double ss_res = resid.squaredNorm();
  const double mean = b.mean();
  const double ss_tot = (b.array() - mean).square().sum();
  if (ss_tot == 0.0) {
    fit.r_squared = ss_res <= 1e-20 * static_cast<double>(n) * (1.0 + mean * mean) ? 1.0 : 0.0;
  } else {
    fit.r_squared = 1.0 - ss_res / ss_tot;
  }
  return fit;
}

}  // namespace commod::metrics
