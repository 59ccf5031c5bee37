#include "commod/serialize.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "commod/error.hpp"

namespace commod::io {

namespace {

std::string optimizer_name(net::OptimizerKind k) { return k == net::OptimizerKind::adam ? "adam" : "sgd"; }

net::OptimizerKind optimizer_from(const std::string& s) {
  if (s == "adam") return net::OptimizerKind::adam;
  if (s == "sgd") return net::OptimizerKind::sgd;
  throw Error("unknown optimizer '" + s + "' (expected adam or sgd)");
}

std::string diversity_name(debias::DiversityForm f) {
  return f == debias::DiversityForm::abs_cosine ? "abs_cosine" : "cosine_distance";
}

debias::DiversityForm diversity_from(const std::string& s) {
  if (s == "abs_cosine") return debias::DiversityForm::abs_cosine;
  if (s == "cosine_distance") return debias::DiversityForm::cosine_distance;
  throw Error("unknown diversity_form '" + s + "' (expected abs_cosine or cosine_distance)");
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

template <class T>
T field(const json& j, const char* key) {
  if (!j.contains(key)) throw Error(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(std::string("field '") + key + "': " + e.what());
  }
}

}  // namespace

debias::CommodConfig commod_config_from_json(const json& j, debias::CommodConfig c) {
  if (!j.is_object()) throw Error("commod config must be a JSON object");
  static const std::set<std::string> known = {
      "k", "lambda_fair", "lambda_ratio", "lambda_sparsity", "lambda_diversity", "fairness_mode", "epochs",
      "batch_size", "adv_steps_per_gen_step", "adv_warmup_epochs", "lr_gen", "lr_adv", "seed",
      "include_flogit_input", "adversary_hidden", "predictor_hidden", "optimizer", "diversity_form"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw Error("commod config: unknown key '" + key + "'");
  }
  auto take = [&](const char* key, auto& dst) {
    if (j.contains(key)) dst = field<std::decay_t<decltype(dst)>>(j, key);
  };
  take("k", c.k);
  take("lambda_fair", c.lambda_fair);
  take("lambda_ratio", c.lambda_ratio);
  take("lambda_sparsity", c.lambda_sparsity);
  take("lambda_diversity", c.lambda_diversity);
  if (j.contains("fairness_mode")) c.fairness_mode = debias::fairness_mode_from_string(field<std::string>(j, "fairness_mode"));
  take("epochs", c.epochs);
  take("batch_size", c.batch_size);
  take("adv_steps_per_gen_step", c.adv_steps_per_gen_step);
  take("adv_warmup_epochs", c.adv_warmup_epochs);
  take("lr_gen", c.lr_gen);
  take("lr_adv", c.lr_adv);
  take("seed", c.seed);
  take("include_flogit_input", c.include_flogit_input);
  take("adversary_hidden", c.adversary_hidden);
  take("predictor_hidden", c.predictor_hidden);
  if (j.contains("optimizer")) c.optimizer = optimizer_from(field<std::string>(j, "optimizer"));
  if (j.contains("diversity_form")) c.diversity_form = diversity_from(field<std::string>(j, "diversity_form"));
  c.validate();
  return c;
}

json to_json(const debias::CommodConfig& c) {
  return json{{"k", c.k},
              {"lambda_fair", c.lambda_fair},
              {"lambda_ratio", c.lambda_ratio},
              {"lambda_sparsity", c.lambda_sparsity},
              {"lambda_diversity", c.lambda_diversity},
              {"fairness_mode", debias::to_string(c.fairness_mode)},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"adv_steps_per_gen_step", c.adv_steps_per_gen_step},
              {"adv_warmup_epochs", c.adv_warmup_epochs},
              {"lr_gen", c.lr_gen},
              {"lr_adv", c.lr_adv},
              {"seed", c.seed},
              {"include_flogit_input", c.include_flogit_input},
              {"adversary_hidden", c.adversary_hidden},
              {"predictor_hidden", c.predictor_hidden},
              {"optimizer", optimizer_name(c.optimizer)},
              {"diversity_form", diversity_name(c.diversity_form)}};
}

json to_json(const net::DenseNet& n) {
  json layers = json::array();
  for (const auto& l : n.layers()) {
    layers.push_back({{"in", l.in}, {"out", l.out}, {"activation", net::to_string(l.activation)}});
  }
  return json{{"layers", layers}, {"params", std::vector<double>(n.params().begin(), n.params().end())}};
}

net::DenseNet dense_net_from_json(const json& j) {
  std::vector<net::LayerShape> layers;
  for (const auto& l : field<json>(j, "layers")) {
    layers.push_back({field<std::size_t>(l, "in"), field<std::size_t>(l, "out"),
                      net::activation_from_string(field<std::string>(l, "activation"))});
  }
  net::DenseNet n(layers);
  const auto p = field<std::vector<double>>(j, "params");
  if (p.size() != n.param_count()) throw Error("network JSON: parameter count does not match the layers");
  auto dst = n.mutable_params();
  std::copy(p.begin(), p.end(), dst.begin());
  return n;
}

json to_json(const debias::ConceptRatioNet& r) {
  json W = json::array();
  for (std::size_t c = 0; c < r.concepts(); ++c) {
    const auto row = r.concept_row(c);
    W.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return json{{"k", r.concepts()},
              {"feature_dim", r.feature_dim()},
              {"include_flogit_input", r.include_flogit_input()},
              {"W", W},
              {"v", std::vector<double>(r.v().begin(), r.v().end())},
              {"v_bias", r.v_bias()}};
}

debias::ConceptRatioNet ratio_net_from_json(const json& j) {
  debias::ConceptRatioNet r(field<std::size_t>(j, "k"), field<std::size_t>(j, "feature_dim"),
                            field<bool>(j, "include_flogit_input"));
  const auto W = field<std::vector<std::vector<double>>>(j, "W");
  const auto v = field<std::vector<double>>(j, "v");
  if (W.size() != r.concepts() || v.size() != r.concepts()) throw Error("ratio net JSON: concept count mismatch");
  auto mw = r.mutable_W();
  for (std::size_t c = 0; c < W.size(); ++c) {
    if (W[c].size() != r.input_dim()) throw Error("ratio net JSON: concept row width mismatch");
    std::copy(W[c].begin(), W[c].end(), mw.begin() + static_cast<std::ptrdiff_t>(c * r.input_dim()));
  }
  auto mv = r.mutable_v();
  std::copy(v.begin(), v.end(), mv.begin());
  r.mutable_v_bias() = field<double>(j, "v_bias");
  return r;
}

json to_json(const debias::EpochRecord& e) {
  return json{{"epoch", e.epoch},
              {"L_Y", e.loss.L_Y},
              {"L_S", e.loss.L_S},
              {"L_ratio", e.loss.L_ratio},
              {"L_sparsity", e.loss.L_sparsity},
              {"L_diversity", e.loss.L_diversity},
              {"total", e.loss.total},
              {"accuracy", e.accuracy},
              {"p_rule", e.p_rule},
              {"dm", e.dm},
              {"change_proportion", e.change_proportion}};
}

json to_json(const debias::TrainedCommod& m, const std::vector<std::string>& feature_names) {
  json hist = json::array();
  for (const auto& e : m.history) hist.push_back(to_json(e));
  json j{{"config", to_json(m.config)},
         {"seed", m.config.seed},
         {"ratio_net", to_json(m.ratio_net)},
         {"adversary", {{"mode", debias::to_string(m.adversary.mode)}, {"net", to_json(m.adversary.net)}}},
         {"history", hist}};
  if (!feature_names.empty()) j["feature_names"] = feature_names;
  return j;
}

debias::TrainedCommod trained_commod_from_json(const json& j) {
  debias::TrainedCommod m;
  m.config = commod_config_from_json(field<json>(j, "config"));
  m.ratio_net = ratio_net_from_json(field<json>(j, "ratio_net"));
  const auto adv = field<json>(j, "adversary");
  m.adversary.mode = debias::fairness_mode_from_string(field<std::string>(adv, "mode"));
  m.adversary.net = dense_net_from_json(field<json>(adv, "net"));
  for (const auto& e : field<json>(j, "history")) {
    debias::EpochRecord r;
    r.epoch = field<int>(e, "epoch");
    r.loss.L_Y = field<double>(e, "L_Y");
    r.loss.L_S = field<double>(e, "L_S");
    r.loss.L_ratio = field<double>(e, "L_ratio");
    r.loss.L_sparsity = field<double>(e, "L_sparsity");
    r.loss.L_diversity = field<double>(e, "L_diversity");
    r.loss.total = field<double>(e, "total");
    r.accuracy = field<double>(e, "accuracy");
    r.p_rule = field<double>(e, "p_rule");
    r.dm = field<double>(e, "dm");
    r.change_proportion = field<double>(e, "change_proportion");
    m.history.push_back(r);
  }
  return m;
}

json to_json(const basemodel::LogisticModel& m) {
  return json{{"w", m.w}, {"b", m.b}, {"clamp_eps", m.clamp_eps}};
}

basemodel::LogisticModel logistic_from_json(const json& j) {
  basemodel::LogisticModel m;
  m.w = field<std::vector<double>>(j, "w");
  m.b = field<double>(j, "b");
  if (j.contains("clamp_eps")) m.clamp_eps = field<double>(j, "clamp_eps");
  return m;
}

json to_json(const metrics::FairnessReport& r) {
  return json{{"p_rule", r.p_rule},       {"dm", r.dm},
              {"delta_tpr", r.delta_tpr}, {"delta_fpr", r.delta_fpr},
              {"accuracy", r.accuracy},   {"change_proportion", r.change_proportion}};
}

json to_json(const debias::ConceptReport& r) {
  json concepts = json::array();
  for (const auto& c : r.concepts) {
    json feats = json::array();
    for (const auto& f : c.features) feats.push_back({{"feature", f.feature}, {"weight", f.weight}});
    concepts.push_back({{"index", c.index},
                        {"head_weight", c.head_weight},
                        {"direction", c.direction},
                        {"empty", c.empty},
                        {"features", feats}});
  }
  return json{{"v_bias", r.v_bias}, {"eps", r.eps}, {"concepts", concepts}};
}

json to_json(const std::vector<metrics::CalibrationBin>& bins) {
  json out = json::array();
  for (const auto& b : bins) {
    out.push_back({{"lower", b.lower},
                   {"upper", b.upper},
                   {"mean_f", finite_or_null(b.mean_f)},
                   {"mean_g", finite_or_null(b.mean_g)},
                   {"count", b.count}});
  }
  return out;
}

theory::FiniteDistribution distribution_from_json(const json& j) {
  std::vector<theory::DistPoint> pts;
  for (const auto& p : field<json>(j, "points")) {
    pts.push_back({field<double>(p, "weight"), field<double>(p, "eta"), field<double>(p, "eta_bar"),
                   field<double>(p, "eta_star")});
  }
  auto d = theory::FiniteDistribution::from_points(std::move(pts));
  // Supplied priors must agree with the points.
  if (j.contains("pi")) d.pi = field<double>(j, "pi");
  if (j.contains("pi_bar")) d.pi_bar = field<double>(j, "pi_bar");
  if (j.contains("pi_star")) d.pi_star = field<double>(j, "pi_star");
  d.validate();
  return d;
}

json to_json(const theory::FiniteDistribution& d) {
  json pts = json::array();
  for (const auto& p : d.points) {
    pts.push_back({{"weight", p.weight}, {"eta", p.eta}, {"eta_bar", p.eta_bar}, {"eta_star", p.eta_star}});
  }
  return json{{"points", pts}, {"pi", d.pi}, {"pi_bar", d.pi_bar}, {"pi_star", d.pi_star}};
}

theory::FlipTable flip_table_from_json(const json& j) {
  theory::FlipTable t{field<std::int64_t>(j, "gamma_11"), field<std::int64_t>(j, "gamma_01"),
                      field<std::int64_t>(j, "gamma_10"), field<std::int64_t>(j, "gamma_00")};
  t.validate();
  return t;
}

interp::SegmentGrid grid_from_json(const json& j) {
  interp::SegmentGrid g;
  g.name = j.value("name", std::string("custom"));
  const auto f = field<std::vector<double>>(j, "fairness_edges");
  const auto a = field<std::vector<double>>(j, "accuracy_edges");
  if (f.size() != 3 || a.size() != 3) throw Error("segment grid: exactly 3 edges per axis are required");
  std::copy(f.begin(), f.end(), g.fairness_edges.begin());
  std::copy(a.begin(), a.end(), g.accuracy_edges.begin());
  const auto o = j.value("orientation", std::string("higher_fair_better"));
  if (o == "higher_fair_better") g.orientation = interp::Orientation::higher_fair_better;
  else if (o == "lower_fair_better") g.orientation = interp::Orientation::lower_fair_better;
  else throw Error("segment grid: unknown orientation '" + o + "'");
  g.validate();
  return g;
}

json to_json(const interp::SegmentGrid& g) {
  return json{{"name", g.name},
              {"fairness_edges", g.fairness_edges},
              {"accuracy_edges", g.accuracy_edges},
              {"orientation", g.orientation == interp::Orientation::higher_fair_better ? "higher_fair_better"
                                                                                       : "lower_fair_better"}};
}

interp::SegmentGrid resolve_grid(const std::string& name_or_path) {
  for (const auto& n : interp::builtin_grid_names()) {
    if (n == name_or_path) return interp::builtin_grid(n);
  }
  return grid_from_json(read_json_file(name_or_path));
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("file not found: " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error("invalid JSON in " + path.string() + ": " + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

void write_json(const std::filesystem::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string to_csv(const tabular::RawTable& t) {
  std::ostringstream os;
  for (std::size_t c = 0; c < t.column_names.size(); ++c) os << (c ? "," : "") << csv_field(t.column_names[c]);
  os << "\n";
  for (const auto& row : t.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) os << (c ? "," : "") << csv_field(row[c]);
    os << "\n";
  }
  return os.str();
}

}  // namespace commod::io
