#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "cbandit/dataset.hpp"

namespace cbandit {

/// Reads a raw survey export.
///
/// The header must name every schema feature plus `action` and `effectiveness`; `user_id` and
/// `reward` are optional and any other column is ignored. `action` holds one arm label or a
/// `;`-separated set, which is expanded into one sample per label. Rows with an empty
/// effectiveness cell are dropped. Empty feature cells are imputed (mean for continuous,
/// mode for binary) and flagged in the dataset's missing mask.
///
/// Throws DataError naming the row for malformed rows and naming the label for unknown arms.
Dataset ingest_csv(const std::filesystem::path& path, const FeatureSchema& schema);
Dataset ingest_csv_text(std::string_view text, const FeatureSchema& schema);

// Path of the JSON sidecar that accompanies an exported dataset CSV.
std::filesystem::path stats_sidecar_path(const std::filesystem::path& csv_path);

/// Writes the dataset in the ingest dialect (one action per row, a `reward` column added)
/// and its PreprocessStats plus missing mask to the sidecar.
void export_csv(const Dataset& data, const std::filesystem::path& path);
std::string format_csv(const Dataset& data);

// ingest_csv, then restores stats and missing mask from the sidecar when one exists.
Dataset load_dataset(const std::filesystem::path& path, const FeatureSchema& schema);

// Shortest decimal text that reads back to the same double.
std::string format_double(double value);

// Splits one CSV line; double-quoted fields may contain commas and doubled quotes.
std::vector<std::string> split_csv_line(std::string_view line);

}  // namespace cbandit
