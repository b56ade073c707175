#pragma once

#include <stdexcept>
#include <string>

namespace cemlab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A documented precondition was violated by the caller.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// An iterative or series computation failed to reach its tolerance.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// A truncated eigenseries could not certify the requested tolerance.
class TruncationError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Monte Carlo run produced too few surviving paths for the requested estimate.
class InsufficientSamples : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidArgument(what);
}

}  // namespace detail
}  // namespace cemlab
