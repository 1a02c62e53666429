#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace odflow {

/// Failure categories surfaced to the command line as exit codes.
enum class ErrorKind {
  internal,       // exit 1
  input_missing,  // exit 2
  input,          // exit 2
  config,         // exit 3
};

inline std::string_view error_kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::internal: return "internal";
    case ErrorKind::input_missing: return "input-missing";
    case ErrorKind::input: return "input";
    case ErrorKind::config: return "config";
  }
  return "internal";
}

inline int exit_code_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::internal: return 1;
    case ErrorKind::input_missing:
    case ErrorKind::input: return 2;
    case ErrorKind::config: return 3;
  }
  return 1;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return exit_code_for(kind_); }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace odflow
