#pragma once

#include <stdexcept>
#include <string>

namespace morphogen {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Malformed input files, bad records, invalid UTF-8.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent model state, corrupt checkpoints, invalid arguments to
/// model-level operations.
class ModelError : public Error {
 public:
  using Error::Error;
};

}  // namespace morphogen
