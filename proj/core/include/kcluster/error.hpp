#pragma once

#include <stdexcept>
#include <string>

namespace kcluster {

// Base of every error the library throws. Subclasses carry enough context
// for the CLI to choose an exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file; `line` is 1-based, 0 when not line-oriented.
class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + (line ? ":" + std::to_string(line) : std::string{}) + ": " + what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Well-formed input that violates a domain invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Backend transport or protocol failure. Retryable failures are retried by the
// remote client before surfacing.
class BackendError : public Error {
 public:
  BackendError(const std::string& what, bool retryable)
      : Error(what), retryable_(retryable) {}
  bool retryable() const noexcept { return retryable_; }

 private:
  bool retryable_;
};

// Operation requested on a backend that does not advertise the capability.
class CapabilityError : public Error {
 public:
  using Error::Error;
};

}  // namespace kcluster
