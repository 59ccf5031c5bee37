#include <cmath>
#include <random>
#include <sstream>

#include "commod/debias.hpp"
#include "commod/error.hpp"
#include "commod/log.hpp"
#include "commod/mathutil.hpp"
#include "commod/metrics.hpp"
#include "commod/tabular.hpp"
#include "trainer_internal.hpp"

namespace commod::debias {

void CommodConfig::validate() const {
  if (k < 1) throw Error("config: k must be at least 1");
  for (double l : {lambda_fair, lambda_ratio, lambda_sparsity, lambda_diversity}) {
    if (!(l >= 0.0) || !std::isfinite(l)) throw Error("config: every lambda must be a finite nonnegative number");
  }
  if (epochs < 1) throw Error("config: epochs must be at least 1");
  if (batch_size < 1) throw Error("config: batch_size must be at least 1");
  if (adv_steps_per_gen_step < 0 || adv_warmup_epochs < 0) {
    throw Error("config: adversary step counts must be nonnegative");
  }
  if (!(lr_gen >= 0.0) || !(lr_adv >= 0.0)) throw Error("config: learning rates must be nonnegative");
  if (adversary_hidden < 1 || predictor_hidden < 1) throw Error("config: hidden widths must be positive");
}

TrainingData TrainingData::from(const tabular::Dataset& ds, std::vector<double> base_logits) {
  if (base_logits.size() != ds.rows()) throw Error("training data: base logits do not match the dataset");
  for (double z : base_logits) {
    if (!std::isfinite(z)) throw Error("training data: non-finite base logit");
  }
  TrainingData t;
  t.X = ds.X;
  t.y = ds.y;
  t.s = ds.s;
  t.flogit = std::move(base_logits);
  return t;
}

TrainingData TrainingData::from(const tabular::Dataset& ds, const basemodel::LogisticModel& base) {
  return from(ds, basemodel::logits(base, ds.X));
}

TrainingData TrainingData::subset(std::span<const std::size_t> rows) const {
  TrainingData t;
  t.X = X.select_rows(rows);
  for (std::size_t i : rows) {
    t.y.push_back(y[i]);
    t.s.push_back(s[i]);
    t.flogit.push_back(flogit[i]);
    if (!ratio_weight.empty()) t.ratio_weight.push_back(ratio_weight[i]);
  }
  return t;
}

namespace detail {

double adversary_loss(const Adversary& adv, std::span<const double> z, std::span<const int> y,
                      std::span<const int> s, std::vector<double>* grad_params, std::vector<double>* grad_z) {
  const std::size_t n = z.size();
  const Mat A = adv.inputs(z, y);
  net::ForwardCache cache;
  const bool need_grad = grad_params || grad_z;
  const Mat out = net::forward(adv.net, A, need_grad ? &cache : nullptr, kernels::Exec::serial);
  double loss = 0.0;
  Mat upstream(n, 1);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    loss += bce_with_logit(out(i, 0), s[i]);
    upstream(i, 0) = bce_with_logit_grad(out(i, 0), s[i]) * inv_n;
  }
  loss *= inv_n;
  if (need_grad) {
    auto g = net::backward(adv.net, cache, upstream, kernels::Exec::serial);
    if (grad_params) *grad_params = std::move(g.params);
    if (grad_z) {
      grad_z->resize(n);
      for (std::size_t i = 0; i < n; ++i) (*grad_z)[i] = g.input(i, 0);
    }
  }
  return loss;
}

void check_finite(const LossComponents& l, const std::string& where) {
  for (double v : {l.L_Y, l.L_S, l.L_ratio, l.L_sparsity, l.L_diversity, l.total}) {
    if (!std::isfinite(v)) throw Error("training diverged: non-finite loss at " + where);
  }
}

std::vector<std::size_t> shuffled(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng() % i)]);
  return idx;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void fill_epoch_metrics(EpochRecord& rec, std::span<const double> z, const TrainingData& data) {
  std::vector<int> yhat(z.size()), yhat_f(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    yhat[i] = z[i] > 0.0 ? 1 : 0;
    yhat_f[i] = data.flogit.empty() ? 0 : (data.flogit[i] > 0.0 ? 1 : 0);
  }
  rec.accuracy = metrics::accuracy(yhat, data.y);
  rec.p_rule = metrics::p_rule(yhat, data.s);
  {
    log::ScopedSilence quiet;
    rec.dm = metrics::disparate_mistreatment(yhat, data.y, data.s).dm;
  }
  rec.change_proportion = data.flogit.empty() ? 0.0 : metrics::change_proportion(yhat_f, yhat);
}

}  // namespace detail

double diversity_penalty(const ConceptRatioNet& net, DiversityForm form, std::vector<double>* grad_W) {
  const std::size_t k = net.concepts();
  const std::size_t m = net.input_dim();
  if (grad_W) grad_W->assign(k * m, 0.0);
  std::vector<double> norms(k, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    for (double w : net.concept_row(c)) norms[c] += w * w;
    norms[c] = std::sqrt(norms[c]);
  }
  double total = 0.0;
  bool warned = false;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      if (norms[i] == 0.0 || norms[j] == 0.0) {
        if (!warned) log::warn("diversity penalty: zero-norm concept row; its cosine terms count as 0");
        warned = true;
        continue;
      }
      const auto a = net.concept_row(i);
      const auto b = net.concept_row(j);
      double dot = 0.0;
      for (std::size_t t = 0; t < m; ++t) dot += a[t] * b[t];
      const double cos = dot / (norms[i] * norms[j]);
      double outer = 1.0;  // d penalty / d cos
      if (form == DiversityForm::abs_cosine) {
        total += std::abs(cos);
        outer = cos >= 0.0 ? 1.0 : -1.0;
      } else {
        total += 1.0 - cos;
        outer = -1.0;
      }
      if (grad_W) {
        for (std::size_t t = 0; t < m; ++t) {
          const double da = b[t] / (norms[i] * norms[j]) - cos * a[t] / (norms[i] * norms[i]);
          const double db = a[t] / (norms[i] * norms[j]) - cos * b[t] / (norms[j] * norms[j]);
          (*grad_W)[i * m + t] += outer * da;
          (*grad_W)[j * m + t] += outer * db;
        }
      }
    }
  }
  return total;
}

LossComponents loss_components(const TrainingData& batch, const ConceptRatioNet& ratio_net,
                               const Adversary& adversary, const CommodConfig& cfg,
                               std::vector<double>* gen_grad, std::vector<double>* adv_grad) {
  const std::size_t n = batch.rows();
  if (n == 0) throw Error("loss_components: empty batch");
  if (adversary.mode != cfg.fairness_mode) throw Error("loss_components: adversary mode does not match config");
  const Mat input = ratio_net.bottleneck_input(batch.X, batch.flogit);
  const std::size_t k = ratio_net.concepts();
  const std::size_t m = ratio_net.input_dim();
  const auto W = ratio_net.W();
  const auto v = ratio_net.v();
  const double inv_n = 1.0 / static_cast<double>(n);

  Mat concepts(n, k);
  std::vector<double> r(n), z(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = input.row(i);
    double ri = ratio_net.v_bias();
    for (std::size_t c = 0; c < k; ++c) {
      double cv = 0.0;
      for (std::size_t t = 0; t < m; ++t) cv += W[c * m + t] * x[t];
      concepts(i, c) = cv;
      ri += v[c] * cv;
    }
    r[i] = ri;
    z[i] = ri * batch.flogit[i];
  }

  LossComponents L;
  std::vector<double> dz(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    L.L_Y += bce_with_logit(z[i], batch.y[i]);
    dz[i] = bce_with_logit_grad(z[i], batch.y[i]) * inv_n;
  }
  L.L_Y *= inv_n;

  std::vector<double> dLS_dz;
  const bool need_adv_input_grad = gen_grad && cfg.lambda_fair != 0.0;
  L.L_S = detail::adversary_loss(adversary, z, batch.y, batch.s, adv_grad, need_adv_input_grad ? &dLS_dz : nullptr);
  if (need_adv_input_grad) {
    for (std::size_t i = 0; i < n; ++i) dz[i] -= cfg.lambda_fair * dLS_dz[i];
  }

  std::vector<double> dr(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = batch.ratio_weight.empty() ? 1.0 : batch.ratio_weight[i];
    const double dev = r[i] - 1.0;
    L.L_ratio += w * dev * dev;
    dr[i] = batch.flogit[i] * dz[i] + cfg.lambda_ratio * 2.0 * w * dev * inv_n;
  }
  L.L_ratio *= inv_n;

  double abs_sum = 0.0;
  for (double w : W) abs_sum += std::abs(w);
  L.L_sparsity = abs_sum / static_cast<double>(W.size());

  std::vector<double> div_grad;
  L.L_diversity = diversity_penalty(ratio_net, cfg.diversity_form, gen_grad ? &div_grad : nullptr);

  L.total = L.L_Y - cfg.lambda_fair * L.L_S + cfg.lambda_ratio * L.L_ratio +
            cfg.lambda_sparsity * L.L_sparsity + cfg.lambda_diversity * L.L_diversity;

  if (gen_grad) {
    gen_grad->assign(ratio_net.params().size(), 0.0);
    auto& g = *gen_grad;
    double* gW = g.data();
    double* gv = g.data() + k * m;
    double& gb = g.back();
    for (std::size_t i = 0; i < n; ++i) {
      if (dr[i] == 0.0) continue;
      gb += dr[i];
      const auto x = input.row(i);
      for (std::size_t c = 0; c < k; ++c) {
        gv[c] += dr[i] * concepts(i, c);
        const double scale = dr[i] * v[c];
        if (scale == 0.0) continue;
        for (std::size_t t = 0; t < m; ++t) gW[c * m + t] += scale * x[t];
      }
    }
    const double sp = cfg.lambda_sparsity / static_cast<double>(W.size());
    for (std::size_t t = 0; t < W.size(); ++t) {
      if (W[t] > 0) gW[t] += sp;
      else if (W[t] < 0) gW[t] -= sp;
      gW[t] += cfg.lambda_diversity * div_grad[t];
    }
  }
  return L;
}

std::vector<double> TrainedCommod::scores(const Mat& X, std::span<const double> flogit) const {
  const auto r = ratio_net.ratios(X, flogit);
  std::vector<double> out(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) out[i] = debiased_score(r[i], flogit[i]);
  return out;
}

std::vector<int> TrainedCommod::predict(const Mat& X, std::span<const double> flogit) const {
  const auto r = ratio_net.ratios(X, flogit);
  std::vector<int> out(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) out[i] = r[i] * flogit[i] > 0.0 ? 1 : 0;
  return out;
}

TrainedCommod train_commod(const TrainingData& train, const CommodConfig& cfg) {
  cfg.validate();
  const std::size_t n = train.rows();
  if (n == 0) throw Error("train_commod: empty training set");
  if (train.flogit.size() != n || train.y.size() != n || train.s.size() != n) {
    throw Error("train_commod: training columns have mismatched lengths");
  }
  TrainedCommod out;
  out.config = cfg;
  out.ratio_net = ConceptRatioNet::identity_start(cfg.k, train.X.cols, cfg.include_flogit_input,
                                                  detail::derive_seed(cfg.seed, 0));
  out.adversary = Adversary::make(cfg.fairness_mode, cfg.adversary_hidden, detail::derive_seed(cfg.seed, 1));
  std::mt19937_64 rng(detail::derive_seed(cfg.seed, 2));

  net::Optimizer gen_opt(cfg.optimizer, cfg.lr_gen);
  net::Optimizer adv_opt(cfg.optimizer, cfg.lr_adv);

  auto batch_z = [&](const TrainingData& b) {
    const auto r = out.ratio_net.ratios(b.X, b.flogit);
    std::vector<double> z(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) z[i] = r[i] * b.flogit[i];
    return z;
  };
  auto adversary_step = [&](const TrainingData& b, const std::string& where) {
    const auto z = batch_z(b);
    std::vector<double> grad;
    const double ls = detail::adversary_loss(out.adversary, z, b.y, b.s, &grad, nullptr);
    if (!std::isfinite(ls)) throw Error("training diverged: non-finite adversary loss at " + where);
    adv_opt.step(out.adversary.net.mutable_params(), grad);
  };
  auto context = [](const char* phase, int epoch, std::size_t batch) {
    std::ostringstream os;
    os << phase << " epoch " << epoch << " batch " << batch;
    return os.str();
  };

  for (int e = 0; e < cfg.adv_warmup_epochs; ++e) {
    const auto order = detail::shuffled(n, rng);
    for (std::size_t start = 0, bi = 0; start < n; start += cfg.batch_size, ++bi) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      const auto b = train.subset(std::span(order).subspan(start, end - start));
      adversary_step(b, context("warm-up", e, bi));
    }
  }

  std::vector<double> gen_grad;
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
      const auto L = loss_components(b, out.ratio_net, out.adversary, cfg, &gen_grad, nullptr);
      detail::check_finite(L, where);
      gen_opt.step(out.ratio_net.mutable_params(), gen_grad);
      rec.loss.L_Y += L.L_Y;
      rec.loss.L_S += L.L_S;
      rec.loss.L_ratio += L.L_ratio;
      rec.loss.L_sparsity += L.L_sparsity;
      rec.loss.L_diversity += L.L_diversity;
      rec.loss.total += L.total;
      ++batches;
    }
    const double inv = 1.0 / static_cast<double>(batches);
    rec.loss.L_Y *= inv;
    rec.loss.L_S *= inv;
    rec.loss.L_ratio *= inv;
    rec.loss.L_sparsity *= inv;
    rec.loss.L_diversity *= inv;
    rec.loss.total *= inv;
    detail::fill_epoch_metrics(rec, batch_z(train), train);
    out.history.push_back(rec);
  }
  return out;
}

TrainedCommod train_commod(const tabular::Dataset& train, const basemodel::LogisticModel& base,
                           const CommodConfig& cfg) {
  return train_commod(TrainingData::from(train, base), cfg);
}

}  // namespace commod::debias
