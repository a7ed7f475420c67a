#pragma once

#include <stdexcept>
#include <string>

namespace abelscale {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Rejected input: bad parameters, dimension mismatches, malformed files.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A computation failed (singular system, failed factorization, non-finite values).
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// File could not be read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace abelscale
