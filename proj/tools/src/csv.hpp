#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace densedyn::cli {

/// Comma-separated table without quoting; empty cells read as NaN.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Throws std::runtime_error naming the missing column.
  std::size_t column(std::string_view name) const;
  bool has_column(std::string_view name) const;
  double number(std::size_t row, std::size_t col) const;
  std::vector<double> numbers(std::string_view name) const;
};

CsvTable parse_csv(std::string_view text, const std::string& source);
CsvTable read_csv(const std::filesystem::path& path);

/// Empty string for NaN, otherwise the shortest round-trip decimal.
std::string csv_number(double v);

/// Writes bytes verbatim, creating parent directories.
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace densedyn::cli
