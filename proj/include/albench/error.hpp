#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace albench {

enum class ErrorCode {
  invalid_argument,
  already_labeled,
  budget,
  missing_field,
  invalid_distribution,
  config,
  io,
  protocol,
  runtime,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::already_labeled: return "already_labeled";
    case ErrorCode::budget: return "budget";
    case ErrorCode::missing_field: return "missing_field";
    case ErrorCode::invalid_distribution: return "invalid_distribution";
    case ErrorCode::config: return "config";
    case ErrorCode::io: return "io";
    case ErrorCode::protocol: return "protocol";
    case ErrorCode::runtime: return "runtime";
  }
  return "unknown";
}

/// Every failure raised by the library. The code lets callers (and the CLI's
/// exit-status mapping) distinguish configuration mistakes from runtime ones.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) fail(code, what);
}

}  // namespace albench
