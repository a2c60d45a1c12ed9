#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace hb::csv {

/// Shortest decimal form that parses back to the same double.
std::string format(double v);
/// Semicolon-joined list, used for per-block cells.
std::string format_list(const std::vector<double>& v);

std::vector<std::string> split(std::string_view line, char sep = ',');
double parse_double(std::string_view cell);
std::vector<double> parse_list(std::string_view cell);

}  // namespace hb::csv
