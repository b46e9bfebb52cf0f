#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pmuidx {

// Base of every error raised by the library. Callers that only need to
// distinguish "bad input" from "something failed at runtime" can test
// is_validation().
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual bool is_validation() const noexcept { return false; }
};

// Input rejected before any work was done.
class ValidationError : public Error {
 public:
  using Error::Error;
  bool is_validation() const noexcept override { return true; }
};

class RangeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Timestamps must be strictly increasing within one stream.
class OrderingError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Text that does not match a grammar; carries a byte offset (or line/column).
class ParseError : public ValidationError {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : ValidationError(what), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class StateError : public Error {
 public:
  using Error::Error;
};

// Bad magic, version or truncated binary file.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Archive metadata disagrees with what is on disk.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace pmuidx
