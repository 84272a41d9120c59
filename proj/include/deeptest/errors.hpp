#pragma once

#include <stdexcept>
#include <string>

namespace deeptest {

struct InvalidInputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InsufficientSampleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DegenerateInputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CalibrationMissingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Parse/schema failures on external files; carries enough context to name
// the offending file, line or field in diagnostics.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace deeptest
