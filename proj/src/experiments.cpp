#include "commod/experiments.hpp"

#include <omp.h>

#include <algorithm>
#include <array>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <random>
#include <set>
#include <sstream>

#include "commod/error.hpp"
#include "commod/log.hpp"
#include "commod/mathutil.hpp"

namespace commod::experiments {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string num(double v) {
  if (std::isnan(v)) return "";
  std::array<char, 32> buf{};
  const auto r = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), r.ptr);
}

template <class F>
auto stage(const char* name, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const std::exception& e) {
    throw Error(std::string("stage '") + name + "' failed: " + e.what());
  }
}

int threads_for(int parallelism) { return parallelism > 0 ? parallelism : omp_get_max_threads(); }

fs::path resolve(const fs::path& p, const fs::path& base) { return p.is_absolute() ? p : base / p; }

}  // namespace

void RunConfig::validate() const {
  if (!synthetic) {
    if (!data_path || !schema_path) throw Error("run config: either 'synthetic' or both 'data' and 'schema' are required");
    if (!fs::exists(*data_path)) throw Error("run config: data file not found: " + data_path->string());
    if (!fs::exists(*schema_path)) throw Error("run config: schema file not found: " + schema_path->string());
  }
  if (base_scores && !fs::exists(*base_scores)) {
    throw Error("run config: base scores file not found: " + base_scores->string());
  }
  commod.validate();
}

RunConfig run_config_from_json(const io::json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw Error("run config must be a JSON object");
  static const std::set<std::string> known = {"data",  "schema",      "synthetic",  "synthetic_spec",
                                              "split", "base",        "base_scores", "commod",
                                              "out_dir", "calibration_bins", "explain_eps"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw Error("run config: unknown key '" + key + "'");
  }
  RunConfig c;
  try {
    if (j.contains("data")) c.data_path = resolve(j["data"].get<std::string>(), base_dir);
    if (j.contains("schema")) c.schema_path = resolve(j["schema"].get<std::string>(), base_dir);
    c.synthetic = j.value("synthetic", false);
    if (j.contains("synthetic_spec")) {
      const auto& s = j["synthetic_spec"];
      c.synthetic_spec.n = s.value("n", c.synthetic_spec.n);
      c.synthetic_spec.seed = s.value("seed", c.synthetic_spec.seed);
      c.synthetic_spec.p_sensitive = s.value("p_sensitive", c.synthetic_spec.p_sensitive);
      c.synthetic_spec.base_rate_s0 = s.value("base_rate_s0", c.synthetic_spec.base_rate_s0);
      c.synthetic_spec.base_rate_s1 = s.value("base_rate_s1", c.synthetic_spec.base_rate_s1);
      c.synthetic_spec.proxy_shift = s.value("proxy_shift", c.synthetic_spec.proxy_shift);
      c.synthetic_spec.proxy_noise = s.value("proxy_noise", c.synthetic_spec.proxy_noise);
      c.synthetic_spec.feature_shift = s.value("feature_shift", c.synthetic_spec.feature_shift);
    }
    if (j.contains("split")) {
      const auto& s = j["split"];
      c.split.train_fraction = s.value("train_fraction", c.split.train_fraction);
      c.split.seed = s.value("seed", c.split.seed);
      c.split.refit_on_train = s.value("refit_on_train", c.split.refit_on_train);
    }
    if (j.contains("base")) {
      const auto& b = j["base"];
      c.base.epochs = b.value("epochs", c.base.epochs);
      c.base.learning_rate = b.value("learning_rate", c.base.learning_rate);
      c.base.seed = b.value("seed", c.base.seed);
    }
    if (j.contains("base_scores")) c.base_scores = resolve(j["base_scores"].get<std::string>(), base_dir);
    if (j.contains("out_dir")) c.out_dir = resolve(j["out_dir"].get<std::string>(), base_dir);
    c.calibration_bins = j.value("calibration_bins", c.calibration_bins);
    c.explain_eps = j.value("explain_eps", c.explain_eps);
  } catch (const io::json::exception& e) {
    throw Error(std::string("run config: ") + e.what());
  }
  if (j.contains("commod")) c.commod = io::commod_config_from_json(j["commod"]);
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  return run_config_from_json(io::read_json_file(path), path.has_parent_path() ? path.parent_path() : fs::path("."));
}

io::json to_json(const RunConfig& c) {
  io::json j;
  if (c.data_path) j["data"] = c.data_path->string();
  if (c.schema_path) j["schema"] = c.schema_path->string();
  j["synthetic"] = c.synthetic;
  if (c.synthetic) {
    const auto& s = c.synthetic_spec;
    j["synthetic_spec"] = {{"n", s.n},
                           {"seed", s.seed},
                           {"p_sensitive", s.p_sensitive},
                           {"base_rate_s0", s.base_rate_s0},
                           {"base_rate_s1", s.base_rate_s1},
                           {"proxy_shift", s.proxy_shift},
                           {"proxy_noise", s.proxy_noise},
                           {"feature_shift", s.feature_shift}};
  }
  j["split"] = {{"train_fraction", c.split.train_fraction}, {"seed", c.split.seed}, {"refit_on_train", c.split.refit_on_train}};
  j["base"] = {{"epochs", c.base.epochs}, {"learning_rate", c.base.learning_rate}, {"seed", c.base.seed}};
  if (c.base_scores) j["base_scores"] = c.base_scores->string();
  j["commod"] = io::to_json(c.commod);
  j["calibration_bins"] = c.calibration_bins;
  j["explain_eps"] = c.explain_eps;
  return j;
}

void apply_seed(RunConfig& cfg, std::uint64_t seed) {
  cfg.synthetic_spec.seed = seed;
  cfg.split.seed = seed;
  cfg.base.seed = seed;
  cfg.commod.seed = seed;
}

PreparedData prepare(const RunConfig& cfg) {
  cfg.validate();
  const auto ds = stage("load", [&] {
    if (cfg.synthetic) {
      const auto syn = synthetic::make_synthetic(cfg.synthetic_spec);
      return tabular::preprocess(syn.raw, syn.schema);
    }
    const auto schema = tabular::load_schema(*cfg.schema_path);
    return tabular::preprocess(tabular::load_csv(*cfg.data_path, schema), schema);
  });
  PreparedData out;
  std::tie(out.train, out.test) = stage("split", [&] { return tabular::split(ds, cfg.split); });
  stage("base model", [&] {
    if (cfg.base_scores) {
      auto to_logits = [](const std::vector<double>& p) {
        std::vector<double> z(p.size());
        for (std::size_t i = 0; i < p.size(); ++i) z[i] = basemodel::clamped_logit(p[i], 1e-6);
        return z;
      };
      out.flogit_train = to_logits(basemodel::load_scores(*cfg.base_scores, out.train));
      out.flogit_test = to_logits(basemodel::load_scores(*cfg.base_scores, out.test));
    } else {
      out.base = basemodel::train_logreg(out.train, cfg.base);
      out.flogit_train = basemodel::logits(*out.base, out.train.X);
      out.flogit_test = basemodel::logits(*out.base, out.test.X);
    }
    return 0;
  });
  return out;
}

metrics::PredictionTable prediction_table(const tabular::Dataset& ds, std::span<const double> flogit,
                                          std::vector<int> yhat_g, std::vector<double> score_g) {
  metrics::PredictionTable t;
  t.y = ds.y;
  t.s = ds.s;
  for (double z : flogit) {
    t.yhat_f.push_back(z > 0.0 ? 1 : 0);
    t.score_f.push_back(sigmoid(z));
  }
  t.yhat_g = std::move(yhat_g);
  t.score_g = std::move(score_g);
  return t;
}

double fairness_value(const metrics::FairnessReport& r, debias::FairnessMode mode) {
  return mode == debias::FairnessMode::dp ? r.p_rule : r.dm;
}

CommodRun run_commod(const PreparedData& data, const debias::CommodConfig& cfg, double explain_eps,
                     int calibration_bins) {
  CommodRun run;
  run.model = debias::train_commod(debias::TrainingData::from(data.train, data.flogit_train), cfg);
  const auto tr = prediction_table(data.train, data.flogit_train, run.model.predict(data.train.X, data.flogit_train),
                                   run.model.scores(data.train.X, data.flogit_train));
  const auto te = prediction_table(data.test, data.flogit_test, run.model.predict(data.test.X, data.flogit_test),
                                   run.model.scores(data.test.X, data.flogit_test));
  run.base_train = metrics::base_report(tr);
  run.base_test = metrics::base_report(te);
  run.train = metrics::fairness_report(tr);
  run.test = metrics::fairness_report(te);
  run.concepts = debias::explain(run.model.ratio_net, data.train.feature_names, explain_eps);
  run.calibration = metrics::calibration_table(te.score_f, te.score_g, calibration_bins);
  const Mat W = run.model.ratio_net.concept_matrix();
  run.sparsity = metrics::concept_sparsity(W, explain_eps);
  run.max_cos = metrics::max_abs_cosine(W);
  run.yhat_f_test = te.yhat_f;
  run.yhat_g_test = te.yhat_g;
  return run;
}

AdvRun run_advdebias(const PreparedData& data, const debias::CommodConfig& cfg) {
  AdvRun run;
  run.model = debias::train_advdebias_baseline(debias::TrainingData::from(data.train, data.flogit_train), cfg);
  const auto tr = prediction_table(data.train, data.flogit_train, run.model.predict(data.train.X),
                                   run.model.scores(data.train.X));
  const auto te = prediction_table(data.test, data.flogit_test, run.model.predict(data.test.X),
                                   run.model.scores(data.test.X));
  run.train = metrics::fairness_report(tr);
  run.test = metrics::fairness_report(te);
  run.yhat_f_test = te.yhat_f;
  run.yhat_g_test = te.yhat_g;
  return run;
}

io::json pipeline(const RunConfig& cfg, bool write_outputs) {
  const auto t0 = Clock::now();
  const auto data = prepare(cfg);
  const auto run = stage("train commod", [&] { return run_commod(data, cfg.commod, cfg.explain_eps, cfg.calibration_bins); });

  io::json report;
  report["config"] = to_json(cfg);
  report["data"] = {{"train_rows", data.train.rows()},
                    {"test_rows", data.test.rows()},
                    {"features", data.train.feature_names},
                    {"sensitive_one", data.train.mapping.sensitive_one},
                    {"label_positive", data.train.mapping.label_positive}};
  report["base"] = {{"train", io::to_json(run.base_train)}, {"test", io::to_json(run.base_test)}};
  report["commod"] = {{"train", io::to_json(run.train)}, {"test", io::to_json(run.test)}};
  report["concepts"] = io::to_json(run.concepts);
  report["concept_sparsity"] = {{"active_count", run.sparsity.active_count},
                                {"sparsity_fraction", run.sparsity.sparsity_fraction},
                                {"max_abs_cosine", run.max_cos}};
  report["calibration"] = io::to_json(run.calibration);

  std::time_t now = std::time(nullptr);
  std::array<char, 32> ts{};
  std::strftime(ts.data(), ts.size(), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  report["meta"] = {{"timestamp", ts.data()}, {"runtime_seconds", seconds_since(t0)}};

  if (write_outputs) {
    stage("write outputs", [&] {
      const auto& dir = cfg.out_dir;
      fs::create_directories(dir);
      io::write_json(dir / "report.json", report);
      io::write_json(dir / "commod_model.json", io::to_json(run.model, data.train.feature_names));
      if (data.base) io::write_json(dir / "base_model.json", io::to_json(*data.base));
      std::ostringstream cal;
      cal << "lower,upper,mean_f,mean_g,count\n";
      for (const auto& b : run.calibration) {
        cal << num(b.lower) << ',' << num(b.upper) << ',' << num(b.mean_f) << ',' << num(b.mean_g) << ',' << b.count << '\n';
      }
      io::write_text(dir / "calibration.csv", cal.str());
      std::ostringstream hist;
      hist << "epoch,L_Y,L_S,L_ratio,L_sparsity,L_diversity,total,accuracy,p_rule,dm,change_proportion\n";
      for (const auto& e : run.model.history) {
        hist << e.epoch << ',' << num(e.loss.L_Y) << ',' << num(e.loss.L_S) << ',' << num(e.loss.L_ratio) << ','
             << num(e.loss.L_sparsity) << ',' << num(e.loss.L_diversity) << ',' << num(e.loss.total) << ','
             << num(e.accuracy) << ',' << num(e.p_rule) << ',' << num(e.dm) << ',' << num(e.change_proportion) << '\n';
      }
      io::write_text(dir / "history.csv", hist.str());
      return 0;
    });
  }
  return report;
}

std::string to_string(Method m) { return m == Method::commod ? "commod" : "advdebias"; }

Method method_from_string(const std::string& s) {
  if (s == "commod") return Method::commod;
  if (s == "advdebias") return Method::advdebias;
  throw Error("unknown method '" + s + "' (expected commod or advdebias)");
}

std::size_t SweepGrid::size() const {
  return lambda_fair.size() * lambda_ratio.size() * lambda_sparsity.size() * lambda_diversity.size() * seeds.size();
}

SweepGrid sweep_grid_from_json(const io::json& j) {
  SweepGrid g;
  try {
    if (j.contains("lambda_fair")) g.lambda_fair = j["lambda_fair"].get<std::vector<double>>();
    if (j.contains("lambda_ratio")) g.lambda_ratio = j["lambda_ratio"].get<std::vector<double>>();
    if (j.contains("lambda_sparsity")) g.lambda_sparsity = j["lambda_sparsity"].get<std::vector<double>>();
    if (j.contains("lambda_diversity")) g.lambda_diversity = j["lambda_diversity"].get<std::vector<double>>();
    if (j.contains("seeds")) g.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (j.contains("method")) g.method = method_from_string(j["method"].get<std::string>());
  } catch (const io::json::exception& e) {
    throw Error(std::string("sweep grid: ") + e.what());
  }
  return g;
}

std::vector<QuartileCell> aggregate(const std::vector<SweepRow>& rows) {
  std::vector<QuartileCell> cells;
  for (int f = 1; f <= 4; ++f) {
    for (int a = 1; a <= 4; ++a) cells.push_back({f, a, 0, 0.0});
  }
  for (const auto& r : rows) {
    if (!r.ok) continue;
    auto& c = cells[static_cast<std::size_t>((r.fair_quartile - 1) * 4 + (r.acc_quartile - 1))];
    ++c.count;
    c.mean_change += r.change_proportion;
  }
  for (auto& c : cells) {
    if (c.count) c.mean_change /= static_cast<double>(c.count);
  }
  return cells;
}

SweepResult sweep(const PreparedData& data, const debias::CommodConfig& base, const SweepGrid& grid, int parallelism,
                  std::optional<interp::SegmentGrid> segments) {
  if (grid.size() == 0) throw Error("sweep: empty grid");
  SweepResult result;
  result.method = grid.method;
  for (double lf : grid.lambda_fair)
    for (double lr : grid.lambda_ratio)
      for (double ls : grid.lambda_sparsity)
        for (double ld : grid.lambda_diversity)
          for (auto seed : grid.seeds) {
            SweepRow r;
            r.id = result.rows.size();
            r.lambda_fair = lf;
            r.lambda_ratio = lr;
            r.lambda_sparsity = ls;
            r.lambda_diversity = ld;
            r.seed = seed;
            result.rows.push_back(r);
          }

  auto run_one = [&](SweepRow& r) {
    const auto t0 = Clock::now();
    try {
      auto cfg = base;
      cfg.lambda_fair = r.lambda_fair;
      cfg.lambda_ratio = r.lambda_ratio;
      cfg.lambda_sparsity = r.lambda_sparsity;
      cfg.lambda_diversity = r.lambda_diversity;
      cfg.seed = r.seed;
      if (grid.method == Method::commod) {
        const auto run = run_commod(data, cfg);
        r.accuracy = run.test.accuracy;
        r.fairness = fairness_value(run.test, cfg.fairness_mode);
        r.change_proportion = run.test.change_proportion;
        r.sparsity = run.sparsity.sparsity_fraction;
        r.max_cos = run.max_cos;
      } else {
        const auto run = run_advdebias(data, cfg);
        r.accuracy = run.test.accuracy;
        r.fairness = fairness_value(run.test, cfg.fairness_mode);
        r.change_proportion = run.test.change_proportion;
        r.sparsity = std::numeric_limits<double>::quiet_NaN();
        r.max_cos = std::numeric_limits<double>::quiet_NaN();
      }
      r.ok = true;
    } catch (const std::exception& e) {
      r.ok = false;
      r.error = e.what();
    }
    r.runtime = seconds_since(t0);
  };

  const auto n = static_cast<std::int64_t>(result.rows.size());
#pragma omp parallel for num_threads(threads_for(parallelism)) schedule(dynamic, 1)
  for (std::int64_t i = 0; i < n; ++i) run_one(result.rows[static_cast<std::size_t>(i)]);

  if (segments) {
    result.grid = *segments;
  } else {
    std::vector<double> f, a;
    for (const auto& r : result.rows) {
      if (r.ok) {
        f.push_back(r.fairness);
        a.push_back(r.accuracy);
      }
    }
    if (f.empty()) throw Error("sweep: every run failed; first error: " + result.rows.front().error);
    const auto orient = base.fairness_mode == debias::FairnessMode::dp ? interp::Orientation::higher_fair_better
                                                                       : interp::Orientation::lower_fair_better;
    try {
      result.grid = interp::grid_from_results(f, a, orient, "sweep");
    } catch (const Error&) {
      // Too few distinct results for strict quartiles: fall back to a grid that
      // still partitions the square.
      result.grid = {"sweep", {0.25, 0.5, 0.75}, {0.25, 0.5, 0.75}, orient};
      log::warn("sweep: results too concentrated for quartile edges; using uniform edges");
    }
  }
  for (auto& r : result.rows) {
    if (!r.ok) continue;
    const auto seg = interp::segment_assign(r.fairness, r.accuracy, result.grid);
    r.fair_quartile = seg.fair_quartile;
    r.acc_quartile = seg.acc_quartile;
  }
  result.table = aggregate(result.rows);
  return result;
}

std::string sweep_csv(const SweepResult& r) {
  std::ostringstream os;
  os << "id,method,lambda_fair,lambda_ratio,lambda_sparsity,lambda_diversity,seed,ok,accuracy,fairness,"
        "change_proportion,sparsity,max_cos,runtime,fair_quartile,acc_quartile,error\n";
  for (const auto& row : r.rows) {
    os << row.id << ',' << to_string(r.method) << ',' << num(row.lambda_fair) << ',' << num(row.lambda_ratio) << ','
       << num(row.lambda_sparsity) << ',' << num(row.lambda_diversity) << ',' << row.seed << ',' << (row.ok ? 1 : 0)
       << ',' << num(row.accuracy) << ',' << num(row.fairness) << ',' << num(row.change_proportion) << ','
       << num(row.sparsity) << ',' << num(row.max_cos) << ',' << num(row.runtime) << ',' << row.fair_quartile << ','
       << row.acc_quartile << ',' << io::csv_field(row.error) << '\n';
  }
  return os.str();
}

io::json to_json(const SweepResult& r) {
  io::json rows = io::json::array();
  auto opt = [](double v) { return std::isfinite(v) ? io::json(v) : io::json(nullptr); };
  for (const auto& row : r.rows) {
    io::json j{{"id", row.id},
               {"lambda_fair", row.lambda_fair},
               {"lambda_ratio", row.lambda_ratio},
               {"lambda_sparsity", row.lambda_sparsity},
               {"lambda_diversity", row.lambda_diversity},
               {"seed", row.seed},
               {"ok", row.ok}};
    if (row.ok) {
      j["accuracy"] = row.accuracy;
      j["fairness"] = row.fairness;
      j["change_proportion"] = row.change_proportion;
      j["sparsity"] = opt(row.sparsity);
      j["max_cos"] = opt(row.max_cos);
      j["fair_quartile"] = row.fair_quartile;
      j["acc_quartile"] = row.acc_quartile;
    } else {
      j["error"] = row.error;
    }
    rows.push_back(j);
  }
  io::json table = io::json::array();
  for (const auto& c : r.table) {
    table.push_back({{"fair_quartile", c.fair_quartile},
                     {"acc_quartile", c.acc_quartile},
                     {"count", c.count},
                     {"mean_change", c.count ? io::json(c.mean_change) : io::json(nullptr)}});
  }
  return io::json{{"method", to_string(r.method)}, {"grid", io::to_json(r.grid)}, {"rows", rows}, {"quartile_table", table}};
}

namespace {

std::mt19937_64 suite_rng(std::uint64_t seed, std::uint64_t suite) { return std::mt19937_64(seed * 7919ULL + suite); }

void note_failure(SuiteResult& s, const std::string& what) {
  ++s.failures;
  if (s.first_failure.empty()) s.first_failure = what;
}

}  // namespace

SuiteResult verify_boc_suite(const TheoryVerifyOptions& o) {
  const auto t0 = Clock::now();
  SuiteResult res;
  res.name = "boc_optimality";
  auto rng = suite_rng(o.seed, 1);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int d = 0; d < o.distributions; ++d) {
    const int m = o.max_support <= 2 ? o.max_support : 2 + static_cast<int>(rng() % static_cast<std::uint64_t>(o.max_support - 1));
    std::vector<theory::DistPoint> pts(static_cast<std::size_t>(m));
    double total = 0.0;
    for (auto& p : pts) {
      p.weight = 0.05 + U(rng);
      total += p.weight;
      p.eta = U(rng);
      p.eta_bar = U(rng);
      p.eta_star = U(rng);
    }
    for (auto& p : pts) p.weight /= total;
    const auto dist = theory::FiniteDistribution::from_points(pts);
    theory::CostSpec costs;
    costs.c = 0.05 + 0.9 * U(rng);
    costs.c_bar = 0.05 + 0.9 * U(rng);
    costs.c_star = 0.05 + 0.9 * U(rng);
    costs.lambda_fair = 3.0 * U(rng);
    costs.lambda_ratio = 3.0 * U(rng);
    for (auto pairing : o.pairings) {
      costs.pairing = pairing;
      auto g = theory::boc(dist, costs, 0.0);
      if (o.inject_bug) {
        auto s = theory::boc_score(dist, costs);
        for (std::size_t i = 0; i < s.size(); ++i) g[i] = -s[i] > 0.0 ? 1.0 : 0.0;
      }
      const double risk = theory::lagrangian_risk(g, dist, costs);
      const auto best = theory::exhaustive_min_risk(dist, costs, o.exec);
      ++res.cases;
      const double gap = risk - best.risk;
      res.max_error = std::max(res.max_error, gap);
      if (gap > 1e-12) {
        note_failure(res, "distribution " + std::to_string(d) + " (support " + std::to_string(m) + "): boc risk exceeds the exhaustive minimum by " + num(gap));
      }
    }
  }
  res.seconds = seconds_since(t0);
  return res;
}

SuiteResult verify_identity_suite(const TheoryVerifyOptions& o) {
  const auto t0 = Clock::now();
  SuiteResult res;
  res.name = "change_identity";
  auto rng = suite_rng(o.seed, 2);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int t = 0; t < o.identity_tables; ++t) {
    const auto len = 1 + rng() % static_cast<std::uint64_t>(o.max_table_length);
    const double pf = U(rng), pg = U(rng);
    metrics::PredictionTable table;
    for (std::uint64_t i = 0; i < len; ++i) {
      table.yhat_f.push_back(U(rng) < pf ? 1 : 0);
      table.yhat_g.push_back(U(rng) < pg ? 1 : 0);
    }
    const auto r = theory::verify_change_identity(table);
    ++res.cases;
    res.max_error = std::max(res.max_error, std::abs(r.lhs - r.rhs));
    if (!r.equal) note_failure(res, "table " + std::to_string(t) + ": lhs " + num(r.lhs) + " != rhs " + num(r.rhs));
  }
  res.seconds = seconds_since(t0);
  return res;
}

SuiteResult verify_dp_flip_suite(const TheoryVerifyOptions& o) {
  const auto t0 = Clock::now();
  SuiteResult res;
  res.name = "dp_extreme_flips";
  auto rng = suite_rng(o.seed, 3);
  int attempts = 0;
  while (static_cast<int>(res.cases) < o.flip_tables) {
    if (++attempts > 1000 * o.flip_tables) throw Error("dp flip suite: could not draw enough valid tables");
    const std::int64_t n = 2 + static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(o.max_flip_n - 1));
    std::array<std::int64_t, 4> g{};
    for (std::int64_t i = 0; i < n; ++i) ++g[rng() % 4];
    theory::FlipTable t{g[0], g[1], g[2], g[3]};
    if (t.s1() == 0 || t.s0() == 0) continue;
    const auto ks = theory::switching_point(t);
    const auto o_caps = t.group1_disadvantaged() ? t.g01 + t.g10 : t.g00 + t.g11;
    const std::int64_t kmax = std::min<std::int64_t>({o.max_flip_k, ks.K - 1, o_caps});
    if (kmax < 1) continue;
    const std::int64_t K = 1 + static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(kmax));
    const auto ext = theory::max_prule_k_flips(t, K);
    const auto brute = theory::brute_force_k_flips(t, static_cast<unsigned>(K), o.exec);
    ++res.cases;
    res.max_error = std::max(res.max_error, brute.value - ext.best_p_rule);
    if (brute.value != ext.best_p_rule) {
      std::ostringstream os;
      os << "table (" << t.g11 << ',' << t.g01 << ',' << t.g10 << ',' << t.g00 << "), K=" << K << ": brute force "
         << brute.value << " vs extreme " << ext.best_p_rule;
      note_failure(res, os.str());
    }
  }
  res.seconds = seconds_since(t0);
  return res;
}

SuiteResult verify_dm_suite(const TheoryVerifyOptions& o) {
  const auto t0 = Clock::now();
  SuiteResult res;
  res.name = "dm_endpoint";
  auto rng = suite_rng(o.seed, 4);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int c = 0; c < o.dm_settings; ++c) {
    auto draw = [&] { return 1 + static_cast<std::int64_t>(rng() % 20); };
    theory::GroupLabelCounts n{draw(), draw(), draw(), draw()};
    if (c % 4 == 0) {
      // force gamma == delta
      const auto m = std::min(n.n01, n.n11);
      n.n00 = std::max(n.n00, m);
      n.n10 = m;
    }
    const double dtpr = U(rng), dfpr = U(rng);
    const auto K = 1 + static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(o.dm_max_k));
    const auto opt = theory::min_dm_k_flips(n, dtpr, dfpr, K);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::int64_t x = 0; x <= K; ++x) {
      const double v = theory::dm_model(n, dtpr, dfpr, K, x);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    ++res.cases;
    bool ok = opt.predicted_dm == lo;
    if (opt.any_x) ok = ok && lo == hi;
    if (!ok) {
      std::ostringstream os;
      os << "setting " << c << ": predicted x=" << opt.x_opt << " value " << opt.predicted_dm << " but minimum " << lo;
      note_failure(res, os.str());
    }
  }
  res.seconds = seconds_since(t0);
  return res;
}

bool TheoryReport::all_passed() const {
  return std::all_of(suites.begin(), suites.end(), [](const SuiteResult& s) { return s.passed(); });
}

TheoryReport verify_theory(const TheoryVerifyOptions& o) {
  TheoryReport r;
  r.suites.push_back(verify_boc_suite(o));
  r.suites.push_back(verify_identity_suite(o));
  r.suites.push_back(verify_dp_flip_suite(o));
  r.suites.push_back(verify_dm_suite(o));
  return r;
}

io::json to_json(const TheoryReport& r) {
  io::json suites = io::json::array();
  for (const auto& s : r.suites) {
    suites.push_back({{"name", s.name},
                      {"passed", s.passed()},
                      {"cases", s.cases},
                      {"failures", s.failures},
                      {"max_error", s.max_error},
                      {"first_failure", s.first_failure}});
  }
  return io::json{{"all_passed", r.all_passed()}, {"suites", suites}};
}

SensitivityReport sensitivity(const RunConfig& base, const SensitivityOptions& o) {
  if (o.seeds < 5) throw Error("sensitivity: at least 5 seeds are required");
  const std::set<double> lf(o.lambda_fair.begin(), o.lambda_fair.end());
  const std::set<double> lr(o.lambda_ratio.begin(), o.lambda_ratio.end());
  if (lf.size() < 2 || lr.size() < 2) throw Error("λ columns constant, regression rank-deficient");

  const auto S = static_cast<std::size_t>(o.seeds);
  std::vector<PreparedData> data(S);
  std::vector<metrics::FairnessReport> base_reports(S);
  std::vector<std::string> errors(S);
#pragma omp parallel for num_threads(threads_for(o.parallelism)) schedule(dynamic, 1)
  for (std::int64_t k = 0; k < static_cast<std::int64_t>(S); ++k) {
    try {
      auto cfg = base;
      apply_seed(cfg, static_cast<std::uint64_t>(k));
      data[static_cast<std::size_t>(k)] = prepare(cfg);
      const auto& d = data[static_cast<std::size_t>(k)];
      std::vector<int> yf;
      for (double z : d.flogit_test) yf.push_back(z > 0.0 ? 1 : 0);
      base_reports[static_cast<std::size_t>(k)] =
          metrics::base_report(prediction_table(d.test, d.flogit_test, yf, {}));
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(k)] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw Error("sensitivity: " + e);
  }

  SensitivityReport rep;
  for (std::size_t k = 0; k < S; ++k)
    for (double a : o.lambda_fair)
      for (double b : o.lambda_ratio) {
        SensitivityRow r;
        r.seed = k;
        r.lambda_fair = a;
        r.lambda_ratio = b;
        rep.rows.push_back(r);
      }
  const auto mode = base.commod.fairness_mode;
#pragma omp parallel for num_threads(threads_for(o.parallelism)) schedule(dynamic, 1)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(rep.rows.size()); ++i) {
    auto& r = rep.rows[static_cast<std::size_t>(i)];
    try {
      auto cfg = base.commod;
      cfg.seed = r.seed;
      cfg.lambda_fair = r.lambda_fair;
      cfg.lambda_ratio = r.lambda_ratio;
      const auto run = run_commod(data[r.seed], cfg);
      r.fair_f = fairness_value(base_reports[r.seed], mode);
      r.acc_f = base_reports[r.seed].accuracy;
      r.dist = run.test.change_proportion;
      r.acc_g = run.test.accuracy;
      r.fair_g = fairness_value(run.test, mode);
    } catch (const std::exception& e) {
#pragma omp critical(commod_sensitivity_error)
      if (errors.front().empty()) errors.front() = e.what();
    }
  }
  if (!errors.front().empty()) throw Error("sensitivity: " + errors.front());

  Mat X(rep.rows.size(), 4);
  std::vector<double> dist, acc, fair;
  for (std::size_t i = 0; i < rep.rows.size(); ++i) {
    const auto& r = rep.rows[i];
    X(i, 0) = r.fair_f;
    X(i, 1) = r.acc_f;
    X(i, 2) = r.lambda_ratio;
    X(i, 3) = r.lambda_fair;
    dist.push_back(r.dist);
    acc.push_back(r.acc_g);
    fair.push_back(r.fair_g);
  }
  const std::vector<std::string> names{"fair_f", "acc_f", "lambda_ratio", "lambda_fair"};
  rep.dist = metrics::ols_fit(X, dist, names);
  rep.accuracy = metrics::ols_fit(X, acc, names);
  rep.fairness = metrics::ols_fit(X, fair, names);
  return rep;
}

io::json to_json(const SensitivityReport& r) {
  auto fit = [](const metrics::OlsFit& f) {
    return io::json{{"r_squared", f.r_squared},
                    {"intercept", f.coefficients.at(0)},
                    {"fair_f", f.coefficients.at(1)},
                    {"acc_f", f.coefficients.at(2)},
                    {"lambda_ratio", f.coefficients.at(3)},
                    {"lambda_fair", f.coefficients.at(4)}};
  };
  io::json rows = io::json::array();
  for (const auto& x : r.rows) {
    rows.push_back({{"seed", x.seed},
                    {"lambda_fair", x.lambda_fair},
                    {"lambda_ratio", x.lambda_ratio},
                    {"fair_f", x.fair_f},
                    {"acc_f", x.acc_f},
                    {"dist", x.dist},
                    {"acc_g", x.acc_g},
                    {"fair_g", x.fair_g}});
  }
  return io::json{{"regressions", {{"dist", fit(r.dist)}, {"accuracy", fit(r.accuracy)}, {"fairness", fit(r.fairness)}}},
                  {"rows", rows}};
}

}  // namespace commod::experiments
