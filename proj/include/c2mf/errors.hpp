#pragma once

#include <stdexcept>

// Error taxonomy mirrored by the CLI exit codes: usage 1, data 2, numerical 3.

namespace c2mf {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace c2mf
