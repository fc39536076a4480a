#pragma once

#include <stdexcept>
#include <string>

namespace fairpv {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file (JSON or CSV). The message carries line context.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Input parsed but violates a model invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

}  // namespace fairpv
