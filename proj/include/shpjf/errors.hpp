#pragma once

#include <stdexcept>
#include <string>

namespace shpjf {

// Exception hierarchy shared by every module. The CLI maps ValidationError
// and ConfigError (and their subclasses) to exit code 1, everything else to 2.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape or axis mismatch between tensors.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an API precondition (e.g. backward on a non-scalar).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Input data is malformed or out of the accepted domain.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Hyperparameters or generator settings are inconsistent.
class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// An entity ID is not known to a table.
class LookupError : public Error {
 public:
  using Error::Error;
};

/// A record file could not be parsed. Carries the 1-based line number.
class ParseError : public ValidationError {
 public:
  ParseError(const std::string& what, std::size_t line)
      : ValidationError(what + " (line " + std::to_string(line) + ")"), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Metrics were requested on an empty or degenerate set.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

/// Training diverged (non-finite loss).
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace shpjf
