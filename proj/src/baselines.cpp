#include <cmath>
#include <random>
#include <sstream>

#include "commod/debias.hpp"
#include "commod/error.hpp"
#include "commod/mathutil.hpp"
#include "trainer_internal.hpp"

namespace commod::debias {

namespace {

std::vector<double> predictor_logits(const net::DenseNet& predictor, const Mat& X) {
  const Mat out = net::forward(predictor, X, nullptr, kernels::Exec::serial);
  std::vector<double> z(out.rows);
  for (std::size_t i = 0; i < out.rows; ++i) z[i] = out(i, 0);
  return z;
}

}  // namespace

std::vector<double> TrainedAdvDebias::scores(const Mat& X) const {
  auto z = predictor_logits(predictor, X);
  for (double& v : z) v = sigmoid(v);
  return z;
}

std::vector<int> TrainedAdvDebias::predict(const Mat& X) const {
  const auto z = predictor_logits(predictor, X);
  std::vector<int> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] > 0.0 ? 1 : 0;
  return out;
}

TrainedAdvDebias train_advdebias_baseline(const TrainingData& train, const CommodConfig& cfg) {
  cfg.validate();
  const std::size_t n = train.rows();
  if (n == 0) throw Error("train_advdebias_baseline: empty training set");
  TrainedAdvDebias out;
  out.config = cfg;
  out.predictor = net::DenseNet::glorot(
      {{train.X.cols, cfg.predictor_hidden, net::Activation::relu}, {cfg.predictor_hidden, 1, net::Activation::identity}},
      detail::derive_seed(cfg.seed, 10));
  out.adversary = Adversary::make(cfg.fairness_mode, cfg.adversary_hidden, detail::derive_seed(cfg.seed, 11));
  std::mt19937_64 rng(detail::derive_seed(cfg.seed, 12));
  net::Optimizer pred_opt(cfg.optimizer, cfg.lr_gen);
  net::Optimizer adv_opt(cfg.optimizer, cfg.lr_adv);

  auto context = [](const char* phase, int epoch, std::size_t batch) {
    std::ostringstream os;
    os << phase << " epoch " << epoch << " batch " << batch;
    return os.str();
  };
  auto adversary_step = [&](const TrainingData& b, const std::string& where) {
    const auto z = predictor_logits(out.predictor, b.X);
    std::vector<double> grad;
    const double ls = detail::adversary_loss(out.adversary, z, b.y, b.s, &grad, nullptr);
    if (!std::isfinite(ls)) throw Error("training diverged: non-finite adversary loss at " + where);
    adv_opt.step(out.adversary.net.mutable_params(), grad);
  };

  for (int e = 0; e < cfg.adv_warmup_epochs; ++e) {
    const auto order = detail::shuffled(n, rng);
    for (std::size_t start = 0, bi = 0; start < n; start += cfg.batch_size, ++bi) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      adversary_step(train.subset(std::span(order).subspan(start, end - start)), context("warm-up", e, bi));
    }
  }

  for (int e = 0; e < cfg.epochs; ++e) {
    const auto order = detail::shuffled(n, rng);
    EpochRecord rec;
    rec.epoch = e;
    std::size_t batches = 0;
    for (std::size_t start = 0, bi = 0; start < n; start += cfg.batch_size, ++bi) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      const auto b = train.subset(std::span(order).subspan(start, end - start));
      const auto where = context("training", e, bi);
      for (int a = 0; a < cfg.adv_steps_per_gen_step; ++a) adversary_step(b, where);

      const std::size_t m = b.rows();
      const double inv_m = 1.0 / static_cast<double>(m);
      net::ForwardCache cache;
      const Mat zout = net::forward(out.predictor, b.X, &cache, kernels::Exec::serial);
      std::vector<double> z(m);
      for (std::size_t i = 0; i < m; ++i) z[i] = zout(i, 0);
      std::vector<double> dls_dz;
      const double ls = detail::adversary_loss(out.adversary, z, b.y, b.s, nullptr, &dls_dz);
      double ly = 0.0;
      Mat upstream(m, 1);
      for (std::size_t i = 0; i < m; ++i) {
        ly += bce_with_logit(z[i], b.y[i]);
        upstream(i, 0) = bce_with_logit_grad(z[i], b.y[i]) * inv_m - cfg.lambda_fair * dls_dz[i];
      }
      ly *= inv_m;
      LossComponents L;
      L.L_Y = ly;
      L.L_S = ls;
      L.total = ly - cfg.lambda_fair * ls;
      detail::check_finite(L, where);
      const auto g = net::backward(out.predictor, cache, upstream, kernels::Exec::serial);
      pred_opt.step(out.predictor.mutable_params(), g.params);
      rec.loss.L_Y += L.L_Y;
      rec.loss.L_S += L.L_S;
      rec.loss.total += L.total;
      ++batches;
    }
    const double inv = 1.0 / static_cast<double>(batches);
    rec.loss.L_Y *= inv;
    rec.loss.L_S *= inv;
    rec.loss.total *= inv;
    detail::fill_epoch_metrics(rec, predictor_logits(out.predictor, train.X), train);
    out.history.push_back(rec);
  }
  return out;
}

std::vector<int> roc_postprocess(std::span<const double> scores, std::span<const int> s, double theta) {
  if (scores.size() != s.size()) throw Error("roc_postprocess: scores and groups differ in length");
  if (!(theta >= 0.0 && theta < 0.5)) throw Error("roc_postprocess: theta must lie in [0, 0.5)");
  std::vector<int> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (std::abs(scores[i] - 0.5) < theta) {
      out[i] = s[i];
    } else {
      out[i] = scores[i] > 0.5 ? 1 : 0;
    }
  }
  return out;
}

}  // namespace commod::debias
