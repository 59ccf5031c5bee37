#pragma once

// JSON and CSV forms of configs, models, reports and theory inputs.

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "commod/basemodel.hpp"
#include "commod/debias.hpp"
#include "commod/interp_eval.hpp"
#include "commod/metrics.hpp"
#include "commod/netcore.hpp"
#include "commod/theory.hpp"

namespace commod::io {

using json = nlohmann::ordered_json;

/// Missing keys keep their defaults; unknown keys are rejected.
debias::CommodConfig commod_config_from_json(const json& j, debias::CommodConfig base = {});
json to_json(const debias::CommodConfig& cfg);

json to_json(const net::DenseNet& net);
net::DenseNet dense_net_from_json(const json& j);

json to_json(const debias::ConceptRatioNet& net);
debias::ConceptRatioNet ratio_net_from_json(const json& j);

json to_json(const debias::EpochRecord& rec);
json to_json(const debias::TrainedCommod& model, const std::vector<std::string>& feature_names = {});
debias::TrainedCommod trained_commod_from_json(const json& j);

json to_json(const basemodel::LogisticModel& m);
basemodel::LogisticModel logistic_from_json(const json& j);

json to_json(const metrics::FairnessReport& r);
json to_json(const debias::ConceptReport& r);
json to_json(const std::vector<metrics::CalibrationBin>& bins);

theory::FiniteDistribution distribution_from_json(const json& j);
json to_json(const theory::FiniteDistribution& d);
theory::FlipTable flip_table_from_json(const json& j);

interp::SegmentGrid grid_from_json(const json& j);
json to_json(const interp::SegmentGrid& g);
/// A built-in grid name or a path to a grid JSON file.
interp::SegmentGrid resolve_grid(const std::string& name_or_path);

json read_json_file(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);
void write_json(const std::filesystem::path& path, const json& j);

/// RFC 4180 field quoting when needed.
std::string csv_field(const std::string& s);
std::string to_csv(const tabular::RawTable& t);

}  // namespace commod::io
