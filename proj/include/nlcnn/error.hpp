#pragma once

#include <stdexcept>
#include <string>

namespace nlcnn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape or argument contract violated by the caller.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A computation produced NaN or Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed file, config, or dataset.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace nlcnn
