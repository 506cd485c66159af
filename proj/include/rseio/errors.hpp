#pragma once

#include <stdexcept>
#include <string>

namespace rseio {

/// Base class for every failure raised by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration: bad dimensions, schema violations,
/// parameters outside their admissible range.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Numeric breakdown: singular or ill-conditioned matrix, loss of positive
/// definiteness, failed factorization.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Caller misuse: missing required inputs, malformed command invocation.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace rseio
