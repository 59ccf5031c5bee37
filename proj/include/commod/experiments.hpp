#pragma once

// Orchestration behind the command-line tool: end-to-end pipeline runs,
// hyperparameter sweeps with quartile aggregation, the theory verification
// suites and the seed-replicated sensitivity regressions.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "commod/basemodel.hpp"
#include "commod/debias.hpp"
#include "commod/interp_eval.hpp"
#include "commod/metrics.hpp"
#include "commod/serialize.hpp"
#include "commod/synthetic.hpp"
#include "commod/tabular.hpp"
#include "commod/theory.hpp"

namespace commod::experiments {

namespace fs = std::filesystem;

struct RunConfig {
  std::optional<fs::path> data_path;
  std::optional<fs::path> schema_path;
  bool synthetic = false;
  synthetic::SyntheticSpec synthetic_spec;
  tabular::SplitSpec split;
  basemodel::LogRegOptions base;
  std::optional<fs::path> base_scores;  // (row_index, probability) CSV standing in for f
  debias::CommodConfig commod;
  fs::path out_dir = "out";
  int calibration_bins = 10;
  double explain_eps = 0.01;

  /// Referenced files must exist unless the synthetic dataset is selected.
  void validate() const;
};

/// Relative paths resolve against base_dir.
RunConfig run_config_from_json(const io::json& j, const fs::path& base_dir = ".");
RunConfig load_run_config(const fs::path& path);
io::json to_json(const RunConfig& cfg);

/// One seed drives data generation, the split, f and COMMOD.
void apply_seed(RunConfig& cfg, std::uint64_t seed);

struct PreparedData {
  tabular::Dataset train;
  tabular::Dataset test;
  std::optional<basemodel::LogisticModel> base;  // empty when scores were loaded
  std::vector<double> flogit_train;
  std::vector<double> flogit_test;
};

PreparedData prepare(const RunConfig& cfg);

metrics::PredictionTable prediction_table(const tabular::Dataset& ds, std::span<const double> flogit,
                                          std::vector<int> yhat_g, std::vector<double> score_g);

/// P-Rule in DP mode, DM in EO mode.
double fairness_value(const metrics::FairnessReport& r, debias::FairnessMode mode);

struct CommodRun {
  debias::TrainedCommod model;
  metrics::FairnessReport base_train, base_test, train, test;
  debias::ConceptReport concepts;
  std::vector<metrics::CalibrationBin> calibration;  // on the test split
  metrics::Sparsity sparsity;
  double max_cos = 0.0;
  std::vector<int> yhat_f_test, yhat_g_test;
};

CommodRun run_commod(const PreparedData& data, const debias::CommodConfig& cfg, double explain_eps = 0.01,
                     int calibration_bins = 10);

struct AdvRun {
  debias::TrainedAdvDebias model;
  metrics::FairnessReport train, test;
  std::vector<int> yhat_f_test, yhat_g_test;
};

AdvRun run_advdebias(const PreparedData& data, const debias::CommodConfig& cfg);

/// Trains everything, writes report.json, calibration.csv, history.csv,
/// commod_model.json and base_model.json into cfg.out_dir, returns the report.
/// Stage failures are rethrown as "stage '<name>' failed: <cause>".
io::json pipeline(const RunConfig& cfg, bool write_outputs = true);

enum class Method { commod, advdebias };
std::string to_string(Method m);
Method method_from_string(const std::string& s);

struct SweepGrid {
  std::vector<double> lambda_fair{1.0};
  std::vector<double> lambda_ratio{0.1};
  std::vector<double> lambda_sparsity{0.0};
  std::vector<double> lambda_diversity{0.0};
  std::vector<std::uint64_t> seeds{0};
  Method method = Method::commod;

  std::size_t size() const;
};

SweepGrid sweep_grid_from_json(const io::json& j);

struct SweepRow {
  std::size_t id = 0;
  double lambda_fair = 0, lambda_ratio = 0, lambda_sparsity = 0, lambda_diversity = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double accuracy = 0, fairness = 0, change_proportion = 0, sparsity = 0, max_cos = 0, runtime = 0;
  int fair_quartile = 0, acc_quartile = 0;
};

struct QuartileCell {
  int fair_quartile = 0;
  int acc_quartile = 0;
  std::size_t count = 0;
  double mean_change = 0.0;  // meaningful only when count > 0
};

struct SweepResult {
  Method method = Method::commod;
  std::vector<SweepRow> rows;
  interp::SegmentGrid grid;
  std::vector<QuartileCell> table;  // 16 cells, fairness-major
};

/// Runs every grid combination on the prepared data (test-split metrics),
/// up to `parallelism` at once (0: all cores). Without a grid, quartile edges
/// come from the sweep's own successful rows.
SweepResult sweep(const PreparedData& data, const debias::CommodConfig& base, const SweepGrid& grid,
                  int parallelism = 0, std::optional<interp::SegmentGrid> segments = std::nullopt);

std::vector<QuartileCell> aggregate(const std::vector<SweepRow>& rows);
std::string sweep_csv(const SweepResult& r);
io::json to_json(const SweepResult& r);

struct TheoryVerifyOptions {
  int distributions = 50;
  int max_support = 12;
  int identity_tables = 1000;
  int max_table_length = 64;
  int flip_tables = 100;
  int max_flip_n = 16;
  int max_flip_k = 4;
  int dm_settings = 100;
  int dm_max_k = 10;
  std::uint64_t seed = 0;
  bool inject_bug = false;  // negates s* so the BOC suite must fail
  std::vector<theory::Pairing> pairings{theory::Pairing::semantic, theory::Pairing::strict_paper};
  kernels::Exec exec = kernels::Exec::parallel;
};

struct SuiteResult {
  std::string name;
  std::size_t cases = 0;
  std::size_t failures = 0;
  double max_error = 0.0;
  double seconds = 0.0;
  std::string first_failure;

  bool passed() const { return cases > 0 && failures == 0; }
};

SuiteResult verify_boc_suite(const TheoryVerifyOptions& o);
SuiteResult verify_identity_suite(const TheoryVerifyOptions& o);
SuiteResult verify_dp_flip_suite(const TheoryVerifyOptions& o);
SuiteResult verify_dm_suite(const TheoryVerifyOptions& o);

struct TheoryReport {
  std::vector<SuiteResult> suites;
  bool all_passed() const;
};

TheoryReport verify_theory(const TheoryVerifyOptions& o);
io::json to_json(const TheoryReport& r);

struct SensitivityOptions {
  int seeds = 20;
  std::vector<double> lambda_fair{0.5, 1.0, 1.5};
  std::vector<double> lambda_ratio{0.01, 0.05, 0.1};
  int parallelism = 0;
};

struct SensitivityRow {
  std::uint64_t seed = 0;
  double lambda_fair = 0, lambda_ratio = 0;
  double fair_f = 0, acc_f = 0;  // base model, test split
  double dist = 0, acc_g = 0, fair_g = 0;
};

struct SensitivityReport {
  std::vector<SensitivityRow> rows;
  metrics::OlsFit dist, accuracy, fairness;  // regressors: fair_f, acc_f, lambda_ratio, lambda_fair
};

SensitivityReport sensitivity(const RunConfig& base, const SensitivityOptions& o);
io::json to_json(const SensitivityReport& r);

}  // namespace commod::experiments
