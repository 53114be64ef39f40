#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace gnnstab::csv {

// Shortest representation that round-trips to the same double.
std::string format(double value);

std::vector<std::string_view> split(std::string_view line, char sep = ',');

std::string_view trim(std::string_view s);

// Parses a full field as a double / integer; throws ParseError carrying `line`.
double parse_double(std::string_view field, long line);
long long parse_integer(std::string_view field, long line);

}  // namespace gnnstab::csv
