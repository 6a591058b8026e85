#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gridpose {

// Base class for all recoverable errors raised by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input does not determine a unique, well-defined result (zero vectors,
// parallel rotation columns, antipodal rotation sets, unplaceable scenes...).
class DegenerateInput : public Error {
 public:
  using Error::Error;
};

// A point required to project lies at or behind the camera plane.
class BehindCamera : public Error {
 public:
  using Error::Error;
};

// Paired containers disagree in length or vector dimension.
class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

// A reduction was requested over a batch with no contributing element.
class EmptyBatch : public Error {
 public:
  using Error::Error;
};

// A selector (symmetry index, class id, ...) is outside its valid range.
class IndexOutOfRange : public Error {
 public:
  using Error::Error;
};

// Fewer correspondences than the minimal solver requires.
class InsufficientPoints : public Error {
 public:
  using Error::Error;
};

// Point configuration admits no stable solution (collinear, coincident...).
class SingularConfiguration : public Error {
 public:
  using Error::Error;
};

// Robust estimation failed to find a sample with enough inliers.
class NoConsensus : public Error {
 public:
  using Error::Error;
};

// A rectangle with non-positive extent where a proper box is required.
class InvalidBox : public Error {
 public:
  using Error::Error;
};

// The file is recognized but uses a feature this reader does not support.
class UnsupportedFormat : public Error {
 public:
  using Error::Error;
};

// A ground-truth record lacks a required companion annotation.
class MissingAnnotation : public Error {
 public:
  using Error::Error;
};

// Both visibility masks are empty, leaving the error average undefined.
class EmptyUnion : public Error {
 public:
  using Error::Error;
};

// Parse failure in a text or binary file; carries the byte offset at which
// parsing stopped.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t byte_offset)
      : Error(message + " (byte " + std::to_string(byte_offset) + ")"),
        byte_offset_(byte_offset) {}

  std::size_t byte_offset() const { return byte_offset_; }

 private:
  std::size_t byte_offset_ = 0;
};

// Malformed row in a tabular input; carries the zero-based row index.
class SchemaError : public Error {
 public:
  SchemaError(const std::string& message, std::size_t row)
      : Error(message + " (row " + std::to_string(row) + ")"), row_(row) {}

  std::size_t row() const { return row_; }

 private:
  std::size_t row_ = 0;
};

}  // namespace gridpose
