#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "commod/mat.hpp"

namespace commod::tabular {

/// Column roles: {"label", "sensitive", "positive_label", "features"}.
struct Schema {
  std::string label;
  std::string sensitive;
  std::optional<std::string> positive_label;
  std::vector<std::string> features;  // empty: every remaining column
};

Schema parse_schema(std::string_view json_text);
Schema load_schema(const std::filesystem::path& path);

enum class ColumnKind { numeric, categorical };

struct RawTable {
  std::vector<std::string> column_names;
  std::vector<std::vector<std::string>> rows;
  std::vector<ColumnKind> kinds;

  std::size_t column_index(const std::string& name) const;
};

RawTable parse_csv(std::string_view text, const Schema& schema);
RawTable load_csv(const std::filesystem::path& path, const Schema& schema);

struct FeatureEncoding {
  std::string name;           // "age" or "race=Black"
  std::string source_column;
  bool numeric = false;
  double mean = 0.0;
  double stddev = 1.0;        // 0 marks a zero-variance column encoded as constant 0
};

/// How the two-valued label and sensitive columns were mapped to {0,1}.
struct LabelMapping {
  std::string label_positive;
  std::string label_negative;
  std::string sensitive_one;   // minority value
  std::string sensitive_zero;
};

struct Dataset {
  Mat X;
  std::vector<int> y;
  std::vector<int> s;
  std::vector<std::string> feature_names;
  std::vector<FeatureEncoding> encodings;
  LabelMapping mapping;
  std::vector<std::size_t> row_ids;  // index into the preprocessed table
  bool standardized_on_train = false;

  std::size_t rows() const { return X.rows; }
  std::size_t cols() const { return X.cols; }

  /// Throws unless all invariants hold.
  void validate() const;
  Dataset subset(const std::vector<std::size_t>& indices) const;
};

Dataset preprocess(const RawTable& raw, const Schema& schema);

struct SplitSpec {
  double train_fraction = 0.7;
  std::uint64_t seed = 0;
  bool refit_on_train = false;  // restandardize numeric columns with train statistics
};

std::pair<Dataset, Dataset> split(const Dataset& ds, const SplitSpec& spec);

/// Deterministic Fisher-Yates permutation of [0, n).
std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed);

}  // namespace commod::tabular
