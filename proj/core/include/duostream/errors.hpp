#pragma once

#include <stdexcept>
#include <string>

namespace duostream {

// Bad shapes, domains, or argument values.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Malformed or incomplete configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values or diverging optimization (CLI exit code 3).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A required checkpoint or input file is absent (CLI exit code 4).
struct MissingInputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace duostream
