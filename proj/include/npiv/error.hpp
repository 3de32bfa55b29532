#pragma once

#include <stdexcept>
#include <string>

namespace npiv {

enum class ErrorKind {
  domain,
  unsupported_derivative,
  invalid_dimension,
  insufficient_sample,
  degenerate_column,
  degenerate_variance,
  invalid_smoothness,
  precondition,
  config,
  data,
};

const char* to_string(ErrorKind kind);

/// Single exception type for the library; `kind()` lets callers map
/// failures onto exit codes or recovery paths.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::domain: return "domain";
    case ErrorKind::unsupported_derivative: return "unsupported_derivative";
    case ErrorKind::invalid_dimension: return "invalid_dimension";
    case ErrorKind::insufficient_sample: return "insufficient_sample";
    case ErrorKind::degenerate_column: return "degenerate_column";
    case ErrorKind::degenerate_variance: return "degenerate_variance";
    case ErrorKind::invalid_smoothness: return "invalid_smoothness";
    case ErrorKind::precondition: return "precondition";
    case ErrorKind::config: return "config";
    case ErrorKind::data: return "data";
  }
  return "unknown";
}

}  // namespace npiv
