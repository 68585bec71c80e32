#pragma once

#include <charconv>
#include <string>
#include <string_view>

#include "selfrw/errors.hpp"

namespace selfrw {

/// Shortest decimal text that round-trips the double exactly.
inline std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  (void)ec;
  return std::string(buf, ptr);
}

inline double parse_double(std::string_view text) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw Error(ErrorKind::ConfigInvalid, "bad number: '" + std::string(text) + "'");
  }
  return value;
}

inline int64_t parse_int(std::string_view text) {
  int64_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw Error(ErrorKind::ConfigInvalid, "bad integer: '" + std::string(text) + "'");
  }
  return value;
}

inline uint64_t parse_uint(std::string_view text) {
  uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw Error(ErrorKind::ConfigInvalid, "bad unsigned integer: '" + std::string(text) + "'");
  }
  return value;
}

}  // namespace selfrw
