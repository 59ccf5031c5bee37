#include "commod/tabular.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "commod/error.hpp"
#include "commod/log.hpp"

namespace commod::tabular {
namespace {

std::optional<double> parse_number(std::string_view cell) {
  while (!cell.empty() && cell.front() == ' ') cell.remove_prefix(1);
  while (!cell.empty() && cell.back() == ' ') cell.remove_suffix(1);
  if (cell.empty()) return std::nullopt;
  if (cell.front() == '+') cell.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc{} || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
    return std::nullopt;
  }
  return v;
}

// Splits one CSV record starting at `pos`; handles RFC 4180 quoting.
std::vector<std::string> next_record(std::string_view text, std::size_t& pos, std::size_t& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  while (pos < text.size()) {
    const char c = text[pos];
    if (quoted) {
      if (c == '"') {
        if (pos + 1 < text.size() && text[pos + 1] == '"') {
          cell.push_back('"');
          ++pos;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        cell.push_back(c);
      }
      ++pos;
      continue;
    }
    if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cell));
      cell.clear();
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && pos + 1 < text.size() && text[pos + 1] == '\n') ++pos;
      ++pos;
      cells.push_back(std::move(cell));
      return cells;
    } else {
      cell.push_back(c);
    }
    ++pos;
  }
  if (quoted) throw Error("unterminated quoted field at line " + std::to_string(line));
  cells.push_back(std::move(cell));
  return cells;
}

bool same_value(const std::string& a, const std::string& b) {
  if (a == b) return true;
  auto x = parse_number(a);
  auto y = parse_number(b);
  return x && y && *x == *y;
}

std::vector<std::string> distinct_values(const RawTable& raw, std::size_t col) {
  std::set<std::string> values;
  for (const auto& r : raw.rows) values.insert(r[col]);
  return {values.begin(), values.end()};
}

}  // namespace

Schema parse_schema(std::string_view json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("schema: invalid JSON: ") + e.what());
  }
  Schema s;
  if (!j.contains("label") || !j.contains("sensitive")) {
    throw Error("schema: 'label' and 'sensitive' are required");
  }
  s.label = j.at("label").get<std::string>();
  s.sensitive = j.at("sensitive").get<std::string>();
  if (j.contains("positive_label") && !j.at("positive_label").is_null()) {
    const auto& p = j.at("positive_label");
    s.positive_label = p.is_string() ? p.get<std::string>() : p.dump();
  }
  if (j.contains("features")) s.features = j.at("features").get<std::vector<std::string>>();
  return s;
}

Schema load_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("schema file not found: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_schema(buf.str());
}

std::size_t RawTable::column_index(const std::string& name) const {
  auto it = std::find(column_names.begin(), column_names.end(), name);
  if (it == column_names.end()) throw Error("unknown column '" + name + "'");
  return static_cast<std::size_t>(it - column_names.begin());
}

RawTable parse_csv(std::string_view text, const Schema& schema) {
  if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
  RawTable t;
  std::size_t pos = 0;
  std::size_t line = 1;
  t.column_names = next_record(text, pos, line);
  if (t.column_names.size() < 3) {
    throw Error("CSV header needs at least 3 columns (features, label, sensitive)");
  }
  for (auto& name : t.column_names) {
    while (!name.empty() && name.back() == ' ') name.pop_back();
  }
  while (pos < text.size()) {
    ++line;
    const std::size_t record_line = line;
    auto cells = next_record(text, pos, line);
    if (cells.size() == 1 && cells[0].empty()) continue;  // blank line
    if (cells.size() != t.column_names.size()) {
      throw Error("ragged row at line " + std::to_string(record_line) + ": expected " +
                  std::to_string(t.column_names.size()) + " cells, got " +
                  std::to_string(cells.size()));
    }
    t.rows.push_back(std::move(cells));
  }

  // Every column the schema names must exist.
  t.column_index(schema.label);
  t.column_index(schema.sensitive);
  for (const auto& f : schema.features) t.column_index(f);

  t.kinds.assign(t.column_names.size(), ColumnKind::numeric);
  for (std::size_t c = 0; c < t.column_names.size(); ++c) {
    for (const auto& r : t.rows) {
      if (!parse_number(r[c])) {
        t.kinds[c] = ColumnKind::categorical;
        break;
      }
    }
  }
  return t;
}

RawTable load_csv(const std::filesystem::path& path, const Schema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("CSV file not found: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), schema);
}

void Dataset::validate() const {
  const std::size_t n = X.rows;
  if (y.size() != n || s.size() != n || row_ids.size() != n) {
    throw Error("dataset: column lengths disagree");
  }
  if (feature_names.size() != X.cols || encodings.size() != X.cols) {
    throw Error("dataset: feature names do not match column count");
  }
  if (!X.all_finite()) throw Error("dataset: non-finite feature value");
  std::size_t y1 = 0, s1 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if ((y[i] != 0 && y[i] != 1) || (s[i] != 0 && s[i] != 1)) {
      throw Error("dataset: label and sensitive values must be 0/1");
    }
    y1 += static_cast<std::size_t>(y[i]);
    s1 += static_cast<std::size_t>(s[i]);
  }
  if (y1 == 0 || y1 == n) throw Error("dataset: both label classes must be present");
  if (s1 == 0 || s1 == n) throw Error("dataset: both sensitive groups must be present");
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  Dataset out;
  out.X = X.select_rows(indices);
  out.feature_names = feature_names;
  out.encodings = encodings;
  out.mapping = mapping;
  out.standardized_on_train = standardized_on_train;
  for (std::size_t i : indices) {
    out.y.push_back(y[i]);
    out.s.push_back(s[i]);
    out.row_ids.push_back(row_ids[i]);
  }
  return out;
}

Dataset preprocess(const RawTable& raw, const Schema& schema) {
  const std::size_t label_col = raw.column_index(schema.label);
  const std::size_t sens_col = raw.column_index(schema.sensitive);
  const std::size_t n = raw.rows.size();
  if (n == 0) throw Error("preprocess: empty table");

  std::vector<std::size_t> feature_cols;
  if (schema.features.empty()) {
    for (std::size_t c = 0; c < raw.column_names.size(); ++c) {
      if (c != label_col && c != sens_col) feature_cols.push_back(c);
    }
  } else {
    for (const auto& f : schema.features) {
      const std::size_t c = raw.column_index(f);
      if (c == label_col || c == sens_col) {
        throw Error("preprocess: column '" + f + "' cannot be both a feature and a role column");
      }
      feature_cols.push_back(c);
    }
  }
  if (feature_cols.empty()) throw Error("preprocess: no feature columns");

  Dataset ds;
  // Label: the schema's positive value maps to 1.
  const auto label_values = distinct_values(raw, label_col);
  if (label_values.size() != 2) {
    throw Error("label column '" + schema.label + "' must have exactly 2 distinct values, found " +
                std::to_string(label_values.size()));
  }
  std::string positive = label_values[1];
  if (schema.positive_label) {
    auto it = std::find_if(label_values.begin(), label_values.end(),
                           [&](const std::string& v) { return same_value(v, *schema.positive_label); });
    if (it == label_values.end()) {
      throw Error("positive_label '" + *schema.positive_label + "' does not occur in the label column");
    }
    positive = *it;
  }
  ds.mapping.label_positive = positive;
  ds.mapping.label_negative = label_values[0] == positive ? label_values[1] : label_values[0];

  // Sensitive: the minority value maps to 1 (ties: lexicographically last).
  const auto sens_values = distinct_values(raw, sens_col);
  if (sens_values.size() != 2) throw Error("sensitive attribute must be binary");
  std::size_t count_first = 0;
  for (const auto& r : raw.rows) count_first += r[sens_col] == sens_values[0] ? 1 : 0;
  const bool first_is_minority = count_first < n - count_first;
  ds.mapping.sensitive_one = first_is_minority ? sens_values[0] : sens_values[1];
  ds.mapping.sensitive_zero = first_is_minority ? sens_values[1] : sens_values[0];

  for (std::size_t i = 0; i < n; ++i) {
    ds.y.push_back(raw.rows[i][label_col] == positive ? 1 : 0);
    ds.s.push_back(raw.rows[i][sens_col] == ds.mapping.sensitive_one ? 1 : 0);
    ds.row_ids.push_back(i);
  }

  // Feature encodings, in column order.
  std::vector<std::vector<double>> columns;
  for (std::size_t c : feature_cols) {
    const std::string& name = raw.column_names[c];
    if (raw.kinds[c] == ColumnKind::numeric) {
      std::vector<double> col(n);
      double mean = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        col[i] = *parse_number(raw.rows[i][c]);
        mean += col[i];
      }
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (double v : col) var += (v - mean) * (v - mean);
      var /= static_cast<double>(n);
      const double sd = std::sqrt(var);
      FeatureEncoding enc{name, name, true, mean, sd};
      if (sd > 0.0) {
        for (double& v : col) v = (v - mean) / sd;
      } else {
        log::warn("zero-variance numeric column '" + name + "' encoded as constant 0");
        enc.stddev = 0.0;
        std::fill(col.begin(), col.end(), 0.0);
      }
      ds.encodings.push_back(enc);
      ds.feature_names.push_back(name);
      columns.push_back(std::move(col));
    } else {
      for (const auto& value : distinct_values(raw, c)) {
        std::vector<double> col(n);
        for (std::size_t i = 0; i < n; ++i) col[i] = raw.rows[i][c] == value ? 1.0 : 0.0;
        ds.encodings.push_back({name + "=" + value, name, false, 0.0, 1.0});
        ds.feature_names.push_back(name + "=" + value);
        columns.push_back(std::move(col));
      }
    }
  }
  ds.X = Mat(n, columns.size());
  for (std::size_t j = 0; j < columns.size(); ++j) {
    for (std::size_t i = 0; i < n; ++i) ds.X(i, j) = columns[j][i];
  }
  ds.validate();
  return ds;
}

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

namespace {

void refit_standardization(Dataset& train, Dataset& test) {
  for (std::size_t j = 0; j < train.cols(); ++j) {
    auto& enc = train.encodings[j];
    if (!enc.numeric || enc.stddev == 0.0) continue;
    auto raw_value = [&](double z) { return z * enc.stddev + enc.mean; };
    const double n = static_cast<double>(train.rows());
    double mean = 0.0;
    for (std::size_t i = 0; i < train.rows(); ++i) mean += raw_value(train.X(i, j));
    mean /= n;
    double var = 0.0;
    for (std::size_t i = 0; i < train.rows(); ++i) {
      const double d = raw_value(train.X(i, j)) - mean;
      var += d * d;
    }
    const double sd = std::sqrt(var / n);
    for (Dataset* part : {&train, &test}) {
      for (std::size_t i = 0; i < part->rows(); ++i) {
        const double v = raw_value(part->X(i, j));
        part->X(i, j) = sd > 0.0 ? (v - mean) / sd : 0.0;
      }
    }
    enc.mean = mean;
    enc.stddev = sd;
    test.encodings[j] = enc;
  }
  train.standardized_on_train = true;
  test.standardized_on_train = true;
}

}  // namespace

std::pair<Dataset, Dataset> split(const Dataset& ds, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw Error("split: train_fraction must lie strictly between 0 and 1");
  }
  const std::size_t n = ds.rows();
  if (n < 10) throw Error("dataset too small: split needs at least 10 rows, got " + std::to_string(n));
  const auto order = permutation(n, spec.seed);
  auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * spec.train_fraction));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
  std::vector<std::size_t> train_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test_idx(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  Dataset train = ds.subset(train_idx);
  Dataset test = ds.subset(test_idx);
  for (const Dataset* part : {&train, &test}) {
    try {
      part->validate();
    } catch (const Error& e) {
      throw Error(std::string("split half is degenerate (") + e.what() + "); try a different seed");
    }
  }
  if (spec.refit_on_train) refit_standardization(train, test);
  return {std::move(train), std::move(test)};
}

}  // namespace commod::tabular
