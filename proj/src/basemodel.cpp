#include "commod/basemodel.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "commod/error.hpp"
#include "commod/mathutil.hpp"

namespace commod::basemodel {

LogisticModel train_logreg(const tabular::Dataset& train, const LogRegOptions& options,
                           std::vector<double>* loss_history) {
  const std::size_t n = train.rows();
  const std::size_t d = train.cols();
  if (n == 0) throw Error("train_logreg: empty training set");
  LogisticModel m;
  m.w.assign(d, 0.0);
  // Tiny seeded jitter keeps the run tied to its seed without moving the optimum.
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> jitter(-1e-3, 1e-3);
  for (double& w : m.w) w = jitter(rng);

  std::vector<double> grad_w(d);
  int last_finite = -1;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::fill(grad_w.begin(), grad_w.end(), 0.0);
    double grad_b = 0.0;
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto x = train.X.row(i);
      double z = m.b;
      for (std::size_t j = 0; j < d; ++j) z += x[j] * m.w[j];
      loss += bce_with_logit(z, train.y[i]);
      const double g = bce_with_logit_grad(z, train.y[i]);
      for (std::size_t j = 0; j < d; ++j) grad_w[j] += g * x[j];
      grad_b += g;
    }
    loss /= static_cast<double>(n);
    if (!std::isfinite(loss)) {
      throw Error("train_logreg: loss diverged; last finite epoch " + std::to_string(last_finite));
    }
    last_finite = epoch;
    if (loss_history) loss_history->push_back(loss);
    const double step = options.learning_rate / static_cast<double>(n);
    for (std::size_t j = 0; j < d; ++j) m.w[j] -= step * grad_w[j];
    m.b -= step * grad_b;
  }
  return m;
}

std::vector<double> predict_proba(const LogisticModel& m, const Mat& X) {
  if (X.cols != m.w.size()) {
    throw Error("predict_proba: dimension mismatch, model has " + std::to_string(m.w.size()) +
                " weights but input has " + std::to_string(X.cols) + " columns");
  }
  std::vector<double> p(X.rows);
  for (std::size_t i = 0; i < X.rows; ++i) {
    const auto x = X.row(i);
    double z = m.b;
    for (std::size_t j = 0; j < x.size(); ++j) z += x[j] * m.w[j];
    p[i] = sigmoid(z);
  }
  return p;
}

double clamped_logit(double p, double clamp_eps) {
  const double c = std::min(std::max(p, clamp_eps), 1.0 - clamp_eps);
  return logit(c);
}

std::vector<double> logits(const LogisticModel& m, const Mat& X) {
  auto p = predict_proba(m, X);
  for (double& v : p) v = clamped_logit(v, m.clamp_eps);
  return p;
}

std::vector<int> threshold(const std::vector<double>& probabilities) {
  std::vector<int> out(probabilities.size());
  for (std::size_t i = 0; i < probabilities.size(); ++i) out[i] = probabilities[i] > 0.5 ? 1 : 0;
  return out;
}

std::vector<double> load_scores(const std::filesystem::path& path, const tabular::Dataset& ds) {
  std::ifstream in(path);
  if (!in) throw Error("scores file not found: " + path.string());
  std::map<std::size_t, double> by_row;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string idx_s, p_s;
    if (!std::getline(ss, idx_s, ',') || !std::getline(ss, p_s, ',')) {
      throw Error("scores file: malformed line " + std::to_string(line_no));
    }
    std::size_t idx = 0;
    double p = 0.0;
    try {
      std::size_t used = 0;
      idx = std::stoul(idx_s, &used);
      if (used != idx_s.size()) throw std::invalid_argument("index");
      p = std::stod(p_s);
    } catch (const std::exception&) {
      if (line_no == 1) continue;  // header
      throw Error("scores file: malformed line " + std::to_string(line_no));
    }
    if (!(p >= 0.0 && p <= 1.0)) {
      throw Error("scores file: probability outside [0,1] at line " + std::to_string(line_no));
    }
    by_row[idx] = p;
  }
  std::vector<double> out;
  out.reserve(ds.rows());
  for (std::size_t id : ds.row_ids) {
    auto it = by_row.find(id);
    if (it == by_row.end()) throw Error("scores file: no score for row " + std::to_string(id));
    out.push_back(it->second);
  }
  return out;
}

}  // namespace commod::basemodel
