#pragma once

#include <optional>
#include <string>

#include <fmt/format.h>

namespace vimp {

// Shortest decimal that parses back to the same double.
inline std::string format_real(double v) { return fmt::format("{}", v); }

inline std::string format_optional(const std::optional<double>& v) {
  return v ? format_real(*v) : std::string{};
}

}  // namespace vimp
