#pragma once

#include <stdexcept>
#include <string>

namespace dpit {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape or extent mismatch between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent hyperparameters, geometry or skeleton definitions.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed input files (JSON, checkpoints, config files).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace dpit
