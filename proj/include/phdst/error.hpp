#pragma once

#include <stdexcept>
#include <string>

namespace phdst {

// Bad configuration or input data; maps to CLI exit code 1.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File / stream failures; maps to CLI exit code 2.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numeric domain violations or non-finite values.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor / matrix dimension mismatches.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace phdst
