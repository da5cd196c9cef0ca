#pragma once

#include <stdexcept>
#include <string>

namespace cyclonet {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Tensor/layer dimension mismatch; message names the offending axes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration (network shape, hyperparameters, CLI options).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Bad input data (CSV rows, image files, empty datasets, domain violations).
class DataError : public Error {
 public:
  using Error::Error;
};

// File format / filesystem failures.
class IoError : public Error {
 public:
  using Error::Error;
};

// Non-finite values where finite ones are required (NaN loss, log of <=0).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace cyclonet
