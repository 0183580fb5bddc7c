#include "cbandit/csv_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cbandit/error.hpp"
#include "cbandit/preprocess.hpp"

namespace cbandit {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::optional<double> parse_number(std::string_view text) {
  text = trim(text);
  if (text.empty()) return std::nullopt;
  if (text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(value)) {
    throw std::invalid_argument("not a finite number: '" + std::string(text) + "'");
  }
  return value;
}

std::string quote_if_needed(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (const char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        current += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        current += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(current));
      current.clear();
    } else if (c != '\r') {
      current += c;
    }
  }
  if (quoted) throw std::invalid_argument("unterminated quoted field");
  fields.push_back(std::move(current));
  return fields;
}

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) throw std::runtime_error("failed to format double");
  return std::string(buf, ptr);
}

Dataset ingest_csv_text(std::string_view text, const FeatureSchema& schema) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = text.find('\n', pos);
    const std::string_view line =
        text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
    if (!trim(line).empty()) lines.push_back(line);
    if (end == std::string_view::npos) break;
    pos = end + 1;
  }
  if (lines.empty()) throw DataError("CSV input has no header row");

  const auto header = split_csv_line(lines.front());
  auto column_of = [&](std::string_view name) -> std::optional<std::size_t> {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (trim(header[c]) == name) return c;
    }
    return std::nullopt;
  };
  std::vector<std::size_t> feature_cols;
  for (const auto& name : schema.names()) {
    const auto col = column_of(name);
    if (!col) throw DataError("CSV header is missing feature column '" + name + "'");
    feature_cols.push_back(*col);
  }
  const auto action_col = column_of("action");
  const auto effect_col = column_of("effectiveness");
  if (!action_col) throw DataError("CSV header is missing the 'action' column");
  if (!effect_col) throw DataError("CSV header is missing the 'effectiveness' column");
  const auto user_col = column_of("user_id");
  const auto reward_col = column_of("reward");

  std::vector<RawRecord> records;
  std::vector<int> stored_rewards;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const std::size_t row = li;  // 1-based data row number
    std::vector<std::string> fields;
    try {
      fields = split_csv_line(lines[li]);
    } catch (const std::invalid_argument& e) {
      throw DataError("malformed CSV row " + std::to_string(row) + ": " + e.what());
    }
    if (fields.size() != header.size()) {
      throw DataError("malformed CSV row " + std::to_string(row) + ": expected " +
                      std::to_string(header.size()) + " fields, found " +
                      std::to_string(fields.size()));
    }
    RawRecord rec;
    try {
      rec.effectiveness = parse_number(fields[*effect_col]);
      for (const std::size_t col : feature_cols) {
        const auto v = parse_number(fields[col]);
        rec.context.push_back(v ? *v : std::numeric_limits<double>::quiet_NaN());
      }
    } catch (const std::invalid_argument& e) {
      throw DataError("malformed CSV row " + std::to_string(row) + ": " + e.what());
    }
    if (!rec.effectiveness) continue;
    if (*rec.effectiveness < 0.0 || *rec.effectiveness > 10.0) {
      throw DataError("malformed CSV row " + std::to_string(row) +
                      ": effectiveness outside [0, 10]");
    }

    std::string_view actions = trim(fields[*action_col]);
    while (true) {
      const std::size_t sep = actions.find(';');
      const std::string_view label = trim(actions.substr(0, sep));
      if (label.empty()) {
        throw DataError("malformed CSV row " + std::to_string(row) + ": empty action label");
      }
      const auto arm = schema.arm_index(label);
      if (!arm) {
        throw DataError("unknown arm label '" + std::string(label) + "' in CSV row " +
                        std::to_string(row));
      }
      rec.actions.push_back(*arm);
      if (sep == std::string_view::npos) break;
      actions.remove_prefix(sep + 1);
    }
    if (user_col) rec.user_id = std::string(trim(fields[*user_col]));

    int reward = 0;
    if (reward_col) {
      const std::string_view cell = trim(fields[*reward_col]);
      if (cell == "1") {
        reward = 1;
      } else if (!cell.empty() && cell != "0") {
        throw DataError("malformed CSV row " + std::to_string(row) + ": reward must be 0 or 1");
      }
    }
    stored_rewards.push_back(reward);
    records.push_back(std::move(rec));
  }
  if (records.empty()) throw DataError("CSV input has no rows with a reported effectiveness");

  std::vector<std::uint8_t> record_mask;
  PreprocessStats stats = impute_missing(records, schema, record_mask);

  const std::size_t f = schema.num_features();
  std::vector<LoggedSample> samples;
  std::vector<std::uint8_t> mask;
  const bool any_missing =
      std::any_of(record_mask.begin(), record_mask.end(), [](std::uint8_t m) { return m != 0; });
  for (std::size_t r = 0; r < records.size(); ++r) {
    for (auto& s : split_multi_action(records[r])) {
      s.reward = stored_rewards[r];
      samples.push_back(std::move(s));
      if (any_missing) {
        mask.insert(mask.end(), record_mask.begin() + static_cast<std::ptrdiff_t>(r * f),
                    record_mask.begin() + static_cast<std::ptrdiff_t>((r + 1) * f));
      }
    }
  }
  if (!any_missing) {
    stats.fill_values.clear();
    stats.imputed_counts.clear();
  }
  return Dataset(schema, std::move(samples), std::move(stats), std::move(mask));
}

Dataset ingest_csv(const std::filesystem::path& path, const FeatureSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open CSV file '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return ingest_csv_text(buffer.str(), schema);
}

std::filesystem::path stats_sidecar_path(const std::filesystem::path& csv_path) {
  return std::filesystem::path(csv_path.string() + ".stats.json");
}

std::string format_csv(const Dataset& data) {
  const auto& schema = data.schema();
  std::string out;
  for (const auto& name : schema.names()) out += quote_if_needed(name) + ",";
  out += "action,effectiveness,reward,user_id\n";
  for (const auto& s : data.samples()) {
    for (const double v : s.context) out += format_double(v) + ",";
    out += quote_if_needed(schema.arm_names()[s.action]) + ",";
    if (s.effectiveness_raw) out += format_double(*s.effectiveness_raw);
    out += "," + std::to_string(s.reward) + "," + quote_if_needed(s.user_id) + "\n";
  }
  return out;
}

void export_csv(const Dataset& data, const std::filesystem::path& path) {
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write CSV file '" + path.string() + "'");
    out << format_csv(data);
  }
  nlohmann::json sidecar = data.stats();
  auto missing = nlohmann::json::array();
  const auto& mask = data.missing_mask();
  const std::size_t f = data.num_features();
  for (std::size_t k = 0; k < mask.size(); ++k) {
    if (mask[k]) missing.push_back({k / f, k % f});
  }
  sidecar["missing_cells"] = std::move(missing);
  std::ofstream out(stats_sidecar_path(path), std::ios::binary);
  if (!out) throw DataError("cannot write stats sidecar for '" + path.string() + "'");
  out << sidecar.dump(2) << "\n";
}

Dataset load_dataset(const std::filesystem::path& path, const FeatureSchema& schema) {
  Dataset data = ingest_csv(path, schema);
  const auto sidecar_path = stats_sidecar_path(path);
  if (!std::filesystem::exists(sidecar_path)) return data;

  std::ifstream in(sidecar_path, std::ios::binary);
  nlohmann::json sidecar;
  try {
    in >> sidecar;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("invalid stats sidecar '" + sidecar_path.string() + "': " + e.what());
  }
  PreprocessStats stats = sidecar.get<PreprocessStats>();
  const std::size_t f = data.num_features();
  std::vector<std::uint8_t> mask;
  if (sidecar.contains("missing_cells") && !sidecar.at("missing_cells").empty()) {
    mask.assign(data.size() * f, 0);
    for (const auto& cell : sidecar.at("missing_cells")) {
      const auto row = cell.at(0).get<std::size_t>();
      const auto col = cell.at(1).get<std::size_t>();
      if (row >= data.size() || col >= f) throw DataError("missing cell index out of range");
      mask[row * f + col] = 1;
    }
  }
  std::vector<LoggedSample> samples(data.samples().begin(), data.samples().end());
  return Dataset(schema, std::move(samples), std::move(stats), std::move(mask));
}

}  // namespace cbandit
