#pragma once

#include <stdexcept>
#include <string>

namespace pulse {

/// Failure classes. Each maps onto a CLI exit code.
enum class ErrorKind {
  parse,              // malformed input bytes
  validation,         // well-formed but violates an invariant
  insufficient_data,  // too few samples/beats/intervals for the operation
  degenerate,         // numerically undefined (zero mean channel, zero band power)
  not_found,          // edit target does not exist
  version_conflict,   // optimistic lock failed
  runtime,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::parse: return "parse";
    case ErrorKind::validation: return "validation";
    case ErrorKind::insufficient_data: return "insufficient_data";
    case ErrorKind::degenerate: return "degenerate";
    case ErrorKind::not_found: return "not_found";
    case ErrorKind::version_conflict: return "version_conflict";
    case ErrorKind::runtime: return "runtime";
  }
  return "runtime";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Parse error that remembers the 1-based line it came from.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& message)
      : Error(ErrorKind::parse, "line " + std::to_string(line) + ": " + message),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Wraps an error with the pipeline stage that raised it.
class StageError : public Error {
 public:
  StageError(std::string stage, const Error& inner)
      : Error(inner.kind(), stage + ": " + inner.what()), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace pulse
