#pragma once
// Shared small pieces: error types, numeric formatting, infinity sentinel.

#include <charconv>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace fmtree {

// disabled-timer sentinel for maintenance policies
inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct parse_error : std::runtime_error {
  int line = 0, col = 0;
  parse_error(const std::string& msg, int l, int c)
      : std::runtime_error("parse error at " + std::to_string(l) + ":" +
                           std::to_string(c) + ": " + msg),
        line(l),
        col(c) {}
};

struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct budget_error : std::runtime_error {
  uint64_t limit;
  explicit budget_error(uint64_t lim)
      : std::runtime_error("state-space budget of " + std::to_string(lim) +
                           " states exceeded; re-run with --decompose or raise --budget"),
        limit(lim) {}
};

struct analysis_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// shortest decimal form that round-trips
inline std::string fmt_double(double v) {
  char buf[40];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace fmtree
