#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cure {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Domain-type construction failures (validate_question and friends).
struct ValidationError : Error {
  enum class Code {
    MissingField,
    DuplicateLabel,
    GoldNotInOptions,
    BadOptionCount,
    NonConsecutiveLabel,
    EmptyOptionText,
    BadValue,
  };
  Code code;
  ValidationError(Code c, const std::string& what) : Error(what), code(c) {}
};

struct ConfigError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

// Client errors. TimeoutError is a TransportError so the retry loop treats
// both as retryable; HTTP status errors are terminal.
struct TransportError : Error {
  using Error::Error;
};

struct TimeoutError : TransportError {
  using TransportError::TransportError;
};

struct HttpStatusError : Error {
  int status;
  HttpStatusError(int s, const std::string& what) : Error(what), status(s) {}
};

struct NoMatchingRuleError : Error {
  using Error::Error;
};

struct UnparsableAnswerError : Error {
  using Error::Error;
};

struct SchemaMismatchError : Error {
  std::size_t line;
  SchemaMismatchError(std::size_t l, const std::string& what)
      : Error("line " + std::to_string(l) + ": " + what), line(l) {}
};

struct InsufficientDataError : Error {
  using Error::Error;
};

struct IdMismatchError : Error {
  using Error::Error;
};

struct CoverageGapError : Error {
  using Error::Error;
};

}  // namespace cure
