#pragma once

// COMMOD: debias a pretrained classifier f by learning a multiplicative
// update g(x) = sigmoid(r(x) * f_logit(x)), where r is a linear concept
// bottleneck (features -> k concepts -> scalar ratio). Labels change exactly
// where r(x) < 0. An adversary reading r * f_logit supplies the fairness
// signal. Also hosts the two comparison baselines.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "commod/basemodel.hpp"
#include "commod/mat.hpp"
#include "commod/netcore.hpp"
#include "commod/tabular.hpp"

namespace commod::debias {

enum class FairnessMode { dp, eo };
std::string to_string(FairnessMode m);
FairnessMode fairness_mode_from_string(const std::string& s);

// abs_cosine: sum over pairs of |cos(W_i, W_j)| (default).
// cosine_distance: sum over pairs of 1 - cos(W_i, W_j), kept for auditing.
enum class DiversityForm { abs_cosine, cosine_distance };

/// Linear bottleneck r(x) = v . (W x) + v_bias. No activations anywhere.
class ConceptRatioNet {
 public:
  ConceptRatioNet() = default;
  /// All-zero parameters.
  ConceptRatioNet(std::size_t concepts, std::size_t feature_dim, bool include_flogit_input);

  /// W uniform in +-1e-2, v = 0, v_bias = 1: starts at g = f exactly.
  static ConceptRatioNet identity_start(std::size_t concepts, std::size_t feature_dim,
                                        bool include_flogit_input, std::uint64_t seed);

  std::size_t concepts() const { return k_; }
  std::size_t feature_dim() const { return d_; }
  /// Width of the bottleneck input (feature_dim, plus one if f_logit is appended).
  std::size_t input_dim() const { return d_ + (include_flogit_ ? 1 : 0); }
  bool include_flogit_input() const { return include_flogit_; }

  std::span<const double> params() const { return params_; }
  std::span<double> mutable_params() { return params_; }
  std::span<const double> W() const { return {params_.data(), k_ * input_dim()}; }
  std::span<double> mutable_W() { return {params_.data(), k_ * input_dim()}; }
  std::span<const double> v() const { return {params_.data() + k_ * input_dim(), k_}; }
  std::span<double> mutable_v() { return {params_.data() + k_ * input_dim(), k_}; }
  double v_bias() const { return params_.back(); }
  double& mutable_v_bias() { return params_.back(); }

  /// Row i of W (concept i's feature weights).
  std::span<const double> concept_row(std::size_t i) const {
    return {params_.data() + i * input_dim(), input_dim()};
  }
  Mat concept_matrix() const;

  /// r for one bottleneck input row (width input_dim()).
  double ratio(std::span<const double> x) const;
  /// r for every row of X, appending f_logit when the net expects it.
  std::vector<double> ratios(const Mat& X, std::span<const double> flogit) const;
  /// Bottleneck input: X, or [X | f_logit].
  Mat bottleneck_input(const Mat& X, std::span<const double> flogit) const;

 private:
  std::size_t k_ = 0;
  std::size_t d_ = 0;
  bool include_flogit_ = false;
  std::vector<double> params_;
};

/// sigmoid(r * f_logit).
double debiased_score(double r, double flogit);

/// h: reads r * f_logit (DP) or (r * f_logit, y) (EO) and predicts s.
struct Adversary {
  net::DenseNet net;  // output layer is an identity logit
  FairnessMode mode = FairnessMode::dp;

  static Adversary make(FairnessMode mode, std::size_t hidden, std::uint64_t seed);
  std::size_t input_width() const { return mode == FairnessMode::dp ? 1 : 2; }
  /// Adversary inputs for a batch of updated logits.
  Mat inputs(std::span<const double> z, std::span<const int> y) const;
  /// P(s = 1) for each row.
  std::vector<double> predict(std::span<const double> z, std::span<const int> y) const;
};

struct CommodConfig {
  std::size_t k = 2;
  double lambda_fair = 1.0;
  double lambda_ratio = 0.1;
  double lambda_sparsity = 0.0;
  double lambda_diversity = 0.0;
  FairnessMode fairness_mode = FairnessMode::dp;
  int epochs = 100;
  std::size_t batch_size = 128;
  int adv_steps_per_gen_step = 1;
  int adv_warmup_epochs = 5;
  double lr_gen = 1e-2;
  double lr_adv = 1e-2;
  std::uint64_t seed = 0;
  bool include_flogit_input = false;
  std::size_t adversary_hidden = 32;
  std::size_t predictor_hidden = 32;  // AdvDebias baseline only
  net::OptimizerKind optimizer = net::OptimizerKind::adam;
  DiversityForm diversity_form = DiversityForm::abs_cosine;

  void validate() const;
};

/// Rows consumed by the trainers: features, labels, groups and base logits.
struct TrainingData {
  Mat X;
  std::vector<int> y;
  std::vector<int> s;
  std::vector<double> flogit;
  // Per-row weights of the ratio penalty (diagonal M). Empty means all ones.
  std::vector<double> ratio_weight;

  std::size_t rows() const { return X.rows; }
  static TrainingData from(const tabular::Dataset& ds, std::vector<double> base_logits);
  static TrainingData from(const tabular::Dataset& ds, const basemodel::LogisticModel& base);
  TrainingData subset(std::span<const std::size_t> rows) const;
};

struct LossComponents {
  double L_Y = 0.0;
  double L_S = 0.0;
  double L_ratio = 0.0;
  double L_sparsity = 0.0;
  double L_diversity = 0.0;
  double total = 0.0;
};

/// Evaluates every term of the min-max objective on a batch.
///   total = L_Y - lambda_fair L_S + lambda_ratio L_ratio
///           + lambda_sparsity L_sparsity + lambda_diversity L_diversity
/// gen_grad receives d total / d ratio-net params; adv_grad receives
/// d L_S / d adversary params (the adversary descends on L_S).
LossComponents loss_components(const TrainingData& batch, const ConceptRatioNet& ratio_net,
                               const Adversary& adversary, const CommodConfig& cfg,
                               std::vector<double>* gen_grad = nullptr,
                               std::vector<double>* adv_grad = nullptr);

/// Sum over concept pairs of the configured cosine penalty, with gradient.
double diversity_penalty(const ConceptRatioNet& net, DiversityForm form, std::vector<double>* grad_W);

struct EpochRecord {
  int epoch = 0;
  LossComponents loss;      // batch means
  double accuracy = 0.0;    // on the training rows, end of epoch
  double p_rule = 0.0;
  double dm = 0.0;
  double change_proportion = 0.0;
};

struct TrainedCommod {
  ConceptRatioNet ratio_net;
  Adversary adversary;
  CommodConfig config;
  std::vector<EpochRecord> history;

  std::vector<double> scores(const Mat& X, std::span<const double> flogit) const;
  std::vector<int> predict(const Mat& X, std::span<const double> flogit) const;
};

TrainedCommod train_commod(const TrainingData& train, const CommodConfig& cfg);
TrainedCommod train_commod(const tabular::Dataset& train, const basemodel::LogisticModel& base,
                           const CommodConfig& cfg);

/// AdvDebias comparison model: a fresh DenseNet classifier on X trained with
/// the same adversarial loop (no ratio, no base model, no concept penalties).
struct TrainedAdvDebias {
  net::DenseNet predictor;  // outputs a logit
  Adversary adversary;
  CommodConfig config;
  std::vector<EpochRecord> history;  // change_proportion is measured against flogit when given

  std::vector<double> scores(const Mat& X) const;
  std::vector<int> predict(const Mat& X) const;
};

/// `train.flogit` is only used to log change proportions in the history.
TrainedAdvDebias train_advdebias_baseline(const TrainingData& train, const CommodConfig& cfg);

/// Reject-option post-processing: inside |score - 0.5| < theta predict s,
/// outside keep 1[score > 0.5].
std::vector<int> roc_postprocess(std::span<const double> scores, std::span<const int> s, double theta);

struct FeatureWeight {
  std::string feature;
  double weight = 0.0;
};

struct ConceptExplanation {
  std::size_t index = 0;
  double head_weight = 0.0;
  std::string direction;
  std::vector<FeatureWeight> features;  // |weight| > eps, sorted by |weight| descending
  bool empty = false;
};

struct ConceptReport {
  double v_bias = 0.0;
  double eps = 0.01;
  std::vector<ConceptExplanation> concepts;
};

ConceptReport explain(const ConceptRatioNet& net, const std::vector<std::string>& feature_names,
                      double eps = 0.01);

}  // namespace commod::debias
