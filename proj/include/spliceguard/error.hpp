#pragma once

#include <stdexcept>
#include <string>

namespace spliceguard {

/// Failure categories. The CLI maps these onto exit codes.
enum class ErrorKind {
  argument,     // caller passed a value outside the operation's domain
  config,       // configuration is inconsistent or unknown
  format,       // file contents do not match the expected layout
  unsupported,  // well-formed input using a feature we do not handle
  io,           // filesystem failure
  shape,        // tensor dimensions disagree
  internal,     // an invariant of this library was violated
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::argument: return "argument";
    case ErrorKind::config: return "config";
    case ErrorKind::format: return "format";
    case ErrorKind::unsupported: return "unsupported";
    case ErrorKind::io: return "io";
    case ErrorKind::shape: return "shape";
    case ErrorKind::internal: return "internal";
  }
  return "unknown";
}

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

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace spliceguard
