#pragma once

#include <stdexcept>
#include <string>

namespace psteer {

// Error taxonomy mirrored by the CLI exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad configuration values, shape mismatches, invariant violations.
struct ConfigError : Error {
  using Error::Error;
};

struct ShapeError : ConfigError {
  using ConfigError::ConfigError;
};

// Filesystem and container-format failures.
struct IoError : Error {
  using Error::Error;
};

// Non-finite intermediates, factorization failures.
struct NumericError : Error {
  using Error::Error;
};

// Well-formed input on which the requested quantity is undefined.
struct DegenerateInputError : Error {
  using Error::Error;
};

}  // namespace psteer
