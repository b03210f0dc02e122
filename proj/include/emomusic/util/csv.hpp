#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace emomusic::util {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  /// 1-based source line of each row, for diagnostics.
  std::vector<std::size_t> lines;

  /// Column index by header name, or -1.
  int column(std::string_view name) const;
};

/// Minimal RFC-4180 reader: comma separated, double-quoted fields may contain
/// commas and doubled quotes. Blank lines are skipped; surrounding whitespace
/// of unquoted fields is trimmed.
CsvTable parse_csv(std::string_view text);
CsvTable read_csv(const std::filesystem::path& path);

std::string csv_escape(std::string_view field);

/// Shortest round-trippable decimal rendering of a double ("nan" for NaN).
std::string format_real(double value);

}  // namespace emomusic::util
