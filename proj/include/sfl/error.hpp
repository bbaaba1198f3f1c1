#pragma once

#include <stdexcept>
#include <string>

namespace sfl {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor or layer shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A caller-supplied argument or configuration value is out of its domain.
// The CLI maps this to exit code 1.
class ValidationError : public Error {
 public:
  using Error::Error;
};

}  // namespace sfl
