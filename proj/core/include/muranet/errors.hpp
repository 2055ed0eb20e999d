#pragma once

#include <stdexcept>
#include <string>

namespace mura {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid configuration values (bad sizes, thresholds, unknown keys).
struct ConfigError : Error {
  using Error::Error;
};

// Tensor shape, channel or stride mismatches.
struct ShapeError : Error {
  using Error::Error;
};

// Dataset, label or record inconsistencies.
struct DataError : Error {
  using Error::Error;
};

// Non-finite values encountered during optimization.
struct NumericError : Error {
  using Error::Error;
};

// Infeasible synthesis specs.
struct GenError : Error {
  using Error::Error;
};

}  // namespace mura
