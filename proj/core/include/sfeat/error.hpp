#pragma once

#include <stdexcept>
#include <string>

namespace sfeat {

/// Base class for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes or dimensions that do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Malformed, missing or corrupted files and datasets.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or arguments.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or numerically degenerate inputs.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Misuse of the autodiff graph (non-scalar backward, double backward).
class GraphError : public Error {
 public:
  using Error::Error;
};

}  // namespace sfeat
