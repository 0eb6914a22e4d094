#pragma once

#include <stdexcept>
#include <string>

namespace cropstress::core {

// Failure families; the CLI maps them to distinct exit codes.
enum class ErrorKind {
  config,   // bad configuration, arguments, or out-of-contract call
  data,     // malformed, inconsistent, or corrupt input data
  io,       // filesystem or network failure
  numeric,  // degenerate numeric condition (zero spread, no decline, ...)
};

inline const char* error_kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::config:  return "config";
    case ErrorKind::data:    return "data";
    case ErrorKind::io:      return "io";
    case ErrorKind::numeric: return "numeric";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) {
  throw Error(kind, msg);
}

inline void require(bool cond, ErrorKind kind, const std::string& msg) {
  if (!cond) fail(kind, msg);
}

}  // namespace cropstress::core
