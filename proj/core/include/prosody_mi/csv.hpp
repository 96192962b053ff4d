#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace prosody_mi::csv {

// A parsed CSV file: header names plus rows of raw string fields. Lines
// starting with '#' are comments (used for provenance headers) and are
// skipped, as are blank lines.
struct Table {
  std::string source;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<long> row_lines;  // 1-based line number of each row

  // Index of a header column; throws ParseError when absent.
  std::size_t column(std::string_view name) const;
  bool has_column(std::string_view name) const;
};

std::vector<std::string> split_line(std::string_view line);

Table read(std::istream& in, const std::string& source);
Table read_file(const std::string& path);

double to_double(const std::string& field, const Table& table, std::size_t row,
                 std::string_view column);
long to_long(const std::string& field, const Table& table, std::size_t row,
             std::string_view column);

// Shortest round-trip representation of a double ("nan" for NaN).
std::string format_double(double value);

}  // namespace prosody_mi::csv
