#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "commod/mat.hpp"
#include "commod/tabular.hpp"

namespace commod::basemodel {

/// The pretrained classifier f: sigmoid(x . w + b).
struct LogisticModel {
  std::vector<double> w;
  double b = 0.0;
  double clamp_eps = 1e-6;
};

struct LogRegOptions {
  int epochs = 2000;
  double learning_rate = 0.5;
  std::uint64_t seed = 0;
};

/// Full-batch gradient descent on mean binary cross-entropy. Throws with the
/// last finite epoch if the loss diverges.
LogisticModel train_logreg(const tabular::Dataset& train, const LogRegOptions& options = {},
                           std::vector<double>* loss_history = nullptr);

std::vector<double> predict_proba(const LogisticModel& m, const Mat& X);

/// logit(clamp(f(x), eps, 1 - eps)); always finite.
std::vector<double> logits(const LogisticModel& m, const Mat& X);

/// Clamped logit of an arbitrary probability.
double clamped_logit(double p, double clamp_eps);

std::vector<int> threshold(const std::vector<double>& probabilities);

/// Reads (row_index, probability) pairs and returns probabilities aligned with
/// ds.row_ids, so any external model can stand in for f.
std::vector<double> load_scores(const std::filesystem::path& path, const tabular::Dataset& ds);

}  // namespace commod::basemodel
