#pragma once

#include <iosfwd>
#include <string_view>
#include <vector>

namespace vimp::cli {

// Parses `a:b:step` (inclusive of b when step divides the span within
// 1e-9) or a comma list of values.
std::vector<double> parse_grid(std::string_view text);

// Entry point shared by the executable and the tests. Exit codes: 0 success,
// 1 runtime failure (or theorem-check FAIL), 2 validation error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace vimp::cli
