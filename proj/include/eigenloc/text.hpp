#pragma once

#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace eigenloc {

// Splits a line on commas. The formats used here never quote fields.
std::vector<std::string_view> split_fields(std::string_view line, char sep = ',');

// Reads one line, stripping a trailing '\r'. Returns false at end of stream.
bool read_line(std::istream& in, std::string& line);

std::string_view trim(std::string_view s);

std::optional<double> parse_double(std::string_view s);
std::optional<long long> parse_int(std::string_view s);

// Fixed 9-decimal rendering used by every numeric CSV artifact. Negative zero
// is printed as zero so output is stable across code paths.
std::string fixed9(double x);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

}  // namespace eigenloc
