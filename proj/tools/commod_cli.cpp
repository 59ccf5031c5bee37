// commod: command-line front end for pipelines, sweeps, theory checks and
// sensitivity regressions.

#include <omp.h>

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "commod/error.hpp"
#include "commod/experiments.hpp"
#include "commod/serialize.hpp"

namespace ex = commod::experiments;
namespace io = commod::io;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kRunFailure = 2;
constexpr int kVerificationFailure = 3;

struct UsageError : commod::Error {
  using commod::Error::Error;
};

struct Globals {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  int parallel = 0;
  bool synthetic = false;
  std::string fairness;
  bool strict_paper = false;
};

ex::RunConfig run_config(const Globals& g) {
  ex::RunConfig cfg;
  if (!g.config.empty()) {
    cfg = ex::load_run_config(g.config);
  } else if (g.synthetic) {
    cfg.synthetic = true;
  } else {
    throw UsageError("either --config PATH or --synthetic is required");
  }
  if (g.synthetic) cfg.synthetic = true;
  if (g.seed) ex::apply_seed(cfg, *g.seed);
  if (!g.fairness.empty()) cfg.commod.fairness_mode = commod::debias::fairness_mode_from_string(g.fairness);
  if (g.strict_paper) cfg.commod.diversity_form = commod::debias::DiversityForm::cosine_distance;
  if (!g.out.empty()) cfg.out_dir = g.out;
  return cfg;
}

std::filesystem::path out_dir(const Globals& g, const char* fallback) {
  return g.out.empty() ? std::filesystem::path(fallback) : std::filesystem::path(g.out);
}

void print_report_line(const char* label, const io::json& r) {
  std::cout << label << ": accuracy " << r["accuracy"].get<double>() << ", P-Rule " << r["p_rule"].get<double>()
            << ", DM " << r["dm"].get<double>() << ", changes " << r["change_proportion"].get<double>() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Minimal-change fairness debiasing with concept-based ratio updates"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "Run configuration JSON");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--seed", g.seed, "Seed for data, split, base model and training");
  app.add_option("--parallel", g.parallel, "Concurrent runs or threads (0: all cores)");
  app.add_flag("--synthetic", g.synthetic, "Use the built-in biased dataset");
  app.add_option("--fairness", g.fairness, "Fairness mode")->check(CLI::IsMember({"dp", "eo"}));
  app.add_flag("--strict-paper", g.strict_paper,
               "Literal formulas: swapped multiplier pairing in theory checks, cosine-distance diversity in training");

  auto* pipeline = app.add_subcommand("pipeline", "Train f and COMMOD, write reports and models");

  auto* sweep = app.add_subcommand("sweep", "Hyperparameter grid with quartile aggregation");
  std::string grid_path, method = "commod", segments;
  std::vector<double> sweep_lf, sweep_lr, sweep_ls, sweep_ld;
  int sweep_seeds = 0;
  sweep->add_option("--grid", grid_path, "Grid JSON (lambda_* lists, seeds, method)");
  sweep->add_option("--lambda-fair", sweep_lf)->delimiter(',');
  sweep->add_option("--lambda-ratio", sweep_lr)->delimiter(',');
  sweep->add_option("--lambda-sparsity", sweep_ls)->delimiter(',');
  sweep->add_option("--lambda-diversity", sweep_ld)->delimiter(',');
  sweep->add_option("--seeds", sweep_seeds, "Use seeds 0..N-1");
  sweep->add_option("--method", method)->check(CLI::IsMember({"commod", "advdebias"}));
  sweep->add_option("--segments", segments, "Built-in grid name or grid JSON path (default: from results)");

  auto* verify = app.add_subcommand("verify-theory", "Exhaustive checks of the theoretical results");
  bool inject_bug = false;
  int distributions = 50, support = 12;
  verify->add_flag("--inject-bug", inject_bug, "Negate s* to confirm the harness detects failures");
  verify->add_option("--distributions", distributions);
  verify->add_option("--support", support)->check(CLI::Range(1, 16));

  auto* sens = app.add_subcommand("sensitivity", "Seed-replicated regressions of outcomes on hyperparameters");
  int sens_seeds = 20;
  std::vector<double> sens_lf{0.5, 1.0, 1.5}, sens_lr{0.01, 0.05, 0.1};
  sens->add_option("--seeds", sens_seeds);
  sens->add_option("--lambda-fair", sens_lf)->delimiter(',');
  sens->add_option("--lambda-ratio", sens_lr)->delimiter(',');

  auto* explain = app.add_subcommand("explain", "Concept report of a trained model");
  std::string model_path;
  double eps = 0.01;
  explain->add_option("--model", model_path, "commod_model.json")->required();
  explain->add_option("--eps", eps);

  auto* segment = app.add_subcommand("segment", "Quartile cell of a (fairness, accuracy) point");
  std::string grid_name;
  double fairness = 0, accuracy = 0;
  segment->add_option("--grid", grid_name, "law_dp, law_eo, compas_dp, compas_eo or a JSON path")->required();
  segment->add_option("--fairness-value", fairness)->required();
  segment->add_option("--accuracy", accuracy)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (pipeline->parsed()) {
      auto cfg = run_config(g);
      if (g.out.empty() && g.config.empty()) cfg.out_dir = "out/pipeline";
      const auto report = ex::pipeline(cfg);
      print_report_line("base (test)", report["base"]["test"]);
      print_report_line("commod (test)", report["commod"]["test"]);
      std::cout << "outputs written to " << cfg.out_dir.string() << "\n";
      return kOk;
    }
    if (sweep->parsed()) {
      const auto cfg = run_config(g);
      ex::SweepGrid grid;
      if (!grid_path.empty()) grid = ex::sweep_grid_from_json(io::read_json_file(grid_path));
      if (!sweep_lf.empty()) grid.lambda_fair = sweep_lf;
      if (!sweep_lr.empty()) grid.lambda_ratio = sweep_lr;
      if (!sweep_ls.empty()) grid.lambda_sparsity = sweep_ls;
      if (!sweep_ld.empty()) grid.lambda_diversity = sweep_ld;
      if (sweep_seeds > 0) {
        grid.seeds.clear();
        for (int s = 0; s < sweep_seeds; ++s) grid.seeds.push_back(static_cast<std::uint64_t>(s));
      }
      if (sweep->count("--method")) grid.method = ex::method_from_string(method);
      std::optional<commod::interp::SegmentGrid> seg;
      if (!segments.empty()) seg = io::resolve_grid(segments);
      const auto data = ex::prepare(cfg);
      const auto result = ex::sweep(data, cfg.commod, grid, g.parallel, seg);
      const auto dir = out_dir(g, "out/sweep");
      io::write_text(dir / "sweep.csv", ex::sweep_csv(result));
      io::write_json(dir / "sweep.json", ex::to_json(result));
      std::size_t failed = 0;
      for (const auto& r : result.rows) failed += r.ok ? 0 : 1;
      std::cout << result.rows.size() << " runs, " << failed << " failed; outputs written to " << dir.string() << "\n";
      return kOk;
    }
    if (verify->parsed()) {
      ex::TheoryVerifyOptions o;
      o.seed = g.seed.value_or(0);
      o.inject_bug = inject_bug;
      o.distributions = distributions;
      o.max_support = support;
      if (g.strict_paper) o.pairings = {commod::theory::Pairing::strict_paper};
      if (g.parallel > 0) omp_set_num_threads(g.parallel);
      const auto rep = ex::verify_theory(o);
      for (const auto& s : rep.suites) {
        std::cout << (s.passed() ? "PASS " : "FAIL ") << s.name << " (" << s.cases << " cases, " << s.failures
                  << " failures)";
        if (!s.first_failure.empty()) std::cout << ": " << s.first_failure;
        std::cout << "\n";
      }
      if (!g.out.empty()) io::write_json(std::filesystem::path(g.out) / "theory_report.json", ex::to_json(rep));
      return rep.all_passed() ? kOk : kVerificationFailure;
    }
    if (sens->parsed()) {
      const auto cfg = run_config(g);
      ex::SensitivityOptions o;
      o.seeds = sens_seeds;
      o.lambda_fair = sens_lf;
      o.lambda_ratio = sens_lr;
      o.parallelism = g.parallel;
      const auto rep = ex::sensitivity(cfg, o);
      const auto j = ex::to_json(rep);
      const auto dir = out_dir(g, "out/sensitivity");
      io::write_json(dir / "sensitivity.json", j);
      std::cout << "R^2 dist " << rep.dist.r_squared << ", accuracy " << rep.accuracy.r_squared << ", fairness "
                << rep.fairness.r_squared << "\n";
      return kOk;
    }
    if (explain->parsed()) {
      const auto j = io::read_json_file(model_path);
      const auto model = io::trained_commod_from_json(j);
      std::vector<std::string> names;
      if (j.contains("feature_names")) names = j["feature_names"].get<std::vector<std::string>>();
      if (names.empty()) {
        for (std::size_t i = 0; i < model.ratio_net.feature_dim(); ++i) names.push_back("x" + std::to_string(i));
      }
      std::cout << io::to_json(commod::debias::explain(model.ratio_net, names, eps)).dump(2) << "\n";
      return kOk;
    }
    if (segment->parsed()) {
      const auto grid = io::resolve_grid(grid_name);
      const auto s = commod::interp::segment_assign(fairness, accuracy, grid);
      std::cout << "fairness Q" << s.fair_quartile << ", accuracy Q" << s.acc_quartile << "\n";
      return kOk;
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRunFailure;
  }
  return kUsage;
}
