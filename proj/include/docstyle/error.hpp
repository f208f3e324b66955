#pragma once

#include <stdexcept>
#include <string>

namespace docstyle {

// Base of every error thrown by the library. The CLI maps these to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor/feature dimensions disagree with what an operation expects.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Malformed textual input (architecture strings, manifests, config files).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Missing, unreadable, unwritable or corrupt files.
class IoError : public Error {
 public:
  using Error::Error;
};

// A precondition on argument values was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

}  // namespace docstyle
