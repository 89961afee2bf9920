#pragma once

#include <optional>
#include <string>
#include <vector>

namespace lambc {

// 17 significant digits: enough for doubles to round-trip exactly, and a
// fixed width so identical runs serialize to identical bytes.
std::string format_float(double x);

// Full-string strtod; nullopt on any trailing garbage.
std::optional<double> parse_double(const std::string& text);

std::vector<std::string> split(const std::string& line, char sep);
std::string trim(const std::string& text);

}  // namespace lambc
