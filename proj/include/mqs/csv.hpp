#pragma once

#include <string>
#include <vector>

#include "mqs/types.hpp"

namespace mqs {

/// Locale-independent, round-trip-safe decimal formatting (17 significant
/// digits, '.' separator).
std::string format_double(double v);

/// Locale-independent parse; the whole token must be consumed.
/// `what` names the value in error messages.
double parse_double(const std::string& token, const std::string& what);

/// Splits a CSV line on commas and trims surrounding whitespace.
std::vector<std::string> split_csv_line(const std::string& line);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  int column(const std::string& name) const;  // throws IoError if absent
};

CsvTable read_csv(const std::string& path);
void write_lines(const std::string& path, const std::vector<std::string>& lines);

}  // namespace mqs
