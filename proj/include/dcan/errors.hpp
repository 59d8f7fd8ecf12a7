#pragma once

#include <stdexcept>

namespace dcan {

// Invalid configuration or malformed input files. CLI exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numeric-domain failures: division by zero, log of a non-positive value,
// NaN loss during training. CLI exit code 3.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape mismatches and violated op contracts.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace dcan
