#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace handdi {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents do not line up for the requested operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition of an operation was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// A hyperparameter or option lies outside its admissible range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// A forward value or loss became NaN or infinite.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Input text could not be parsed. Carries the 1-based line (or character
/// position) where parsing stopped, 0 when unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t location)
      : Error(what), location_(location) {}
  std::size_t location() const noexcept { return location_; }

 private:
  std::size_t location_;
};

/// Data is well-formed but inconsistent with the typed schema (unknown ids,
/// mismatched entity kinds, bad meta-path chaining).
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// A fixed-layout file (fingerprints, checkpoints) has the wrong shape.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace handdi
