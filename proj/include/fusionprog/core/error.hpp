#pragma once

#include <stdexcept>
#include <string>

namespace fusionprog {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file (manifest row, config line, header).
class ParseError : public Error {
 public:
  using Error::Error;
};

// A referenced file could not be found or opened.
class ResolutionError : public Error {
 public:
  using Error::Error;
};

// Invalid or inconsistent configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Tensor or vector dimensions do not match what an operation expects.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Fitting a model (imputer, scaler) from data failed.
class FitError : public Error {
 public:
  using Error::Error;
};

// Non-recoverable training failure (non-finite loss, split leakage).
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace fusionprog
