#pragma once

#include <stdexcept>
#include <string>

namespace capvae {

// Error taxonomy shared by every module. The CLI maps ConfigError-like
// failures (InvalidArgument, ShapeError, FormatError) to exit code 2 and
// IoError to exit code 3.

struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StateError : std::logic_error {
  using std::logic_error::logic_error;
};

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace capvae
