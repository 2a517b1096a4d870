#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace nlcnn {

/// Shortest decimal form that parses back to the identical double.
std::string format_double(double v);
/// Strict parse of a full token; nullopt on any trailing garbage.
std::optional<double> parse_double(std::string_view token);
/// Splits on any run of spaces or tabs (and a trailing '\r').
std::vector<std::string_view> split_whitespace(std::string_view line);
std::vector<std::string_view> split_char(std::string_view line, char sep);

}  // namespace nlcnn
