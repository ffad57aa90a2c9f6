#pragma once

#include <stdexcept>
#include <string>

namespace mia {

// User-facing problems: bad configuration, malformed inputs, unusable paths.
// The CLI maps these to exit code 2; anything else is an internal error.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class IoError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Tensor shapes that do not fit the layer or loss they are fed to.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace mia
