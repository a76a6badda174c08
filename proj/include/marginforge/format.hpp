// Locale-independent number formatting for CSV/JSON output.
#pragma once

#include <charconv>
#include <string>

namespace marginforge {

// Shortest-faithful general format with `sig` significant digits, always a
// '.' decimal separator regardless of locale.
inline std::string fmt_g(double v, int sig = 9) {
  char buf[64];
  const auto res =
      std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, sig);
  return std::string(buf, res.ptr);
}

}  // namespace marginforge
