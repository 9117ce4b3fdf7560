// error.hpp - exception types shared by all acdc modules.
//
// Every failure raised by the library derives from acdc::Error.  The CLI maps
// ConfigError to exit code 2 and everything else to exit code 3.

#pragma once

#include <stdexcept>
#include <string>

namespace acdc {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user-supplied configuration (flags, generator specs, scenarios).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Bad argument to a library call (precondition violation).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Malformed file header or unsupported container.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Truncated or inconsistent record inside an otherwise valid file.
class ParseError : public Error {
 public:
  using Error::Error;
};

class EncodeError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

// Vector length does not match the model's feature subset.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Regression input without variation in the regressor.
class DegenerateFitError : public Error {
 public:
  using Error::Error;
};

}  // namespace acdc
