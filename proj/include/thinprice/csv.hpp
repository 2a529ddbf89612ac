#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace thinprice::csv {

// Minimal comma-separated parsing: no quoting, fields trimmed of surrounding
// whitespace. Survey extracts and the files this tool emits never quote.

std::vector<std::string> split_line(std::string_view line);

std::optional<double> parse_double(std::string_view field);
std::optional<long long> parse_int(std::string_view field);

// Shortest decimal text that round-trips the double exactly.
std::string format_double(double value);

}  // namespace thinprice::csv
