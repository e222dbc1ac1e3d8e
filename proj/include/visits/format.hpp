#pragma once

#include <charconv>
#include <string>

namespace visits {

/// Shortest decimal form that round-trips the double exactly.
inline std::string fmt_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace visits
