#pragma once

#include <stdexcept>
#include <string>

namespace uace {

// Base of every error the library throws. CLI exit codes are derived from
// the concrete type (see tools/cli.cpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A value or shape violates a documented invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Declared dimensions disagree with stored data.
class DimensionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Stored digest does not match file contents.
class ChecksumError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// A required file is missing.
class MissingFileError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Factorization failure, divergence, non-finite objective.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Bad arguments or configuration supplied by the caller.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace uace
