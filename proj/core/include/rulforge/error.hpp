#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rulforge {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument or configuration value.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Tensor shapes that do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

/// Token that could not be read as a number. `column` is 1-based, 0 if unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line, std::size_t column = 0)
      : Error(what), line_(line), column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

/// Data row with the wrong number of fields.
class MalformedRowError : public ParseError {
 public:
  MalformedRowError(const std::string& what, std::size_t line)
      : ParseError(what, line) {}
};

/// Well-formed input whose content violates a structural invariant
/// (e.g. a gap in cycle indices).
class IntegrityError : public Error {
 public:
  using Error::Error;
};

/// Damaged or incompatible on-disk artifact (checkpoint, stats file).
class CorruptionError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint whose architecture differs from the one the caller expects.
class ConfigMismatchError : public CorruptionError {
 public:
  using CorruptionError::CorruptionError;
};

/// NaN or infinity produced by a numeric operation.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int epoch, int batch)
      : Error(what), epoch_(epoch), batch_(batch) {}

  int epoch() const noexcept { return epoch_; }
  int batch() const noexcept { return batch_; }

 private:
  int epoch_;
  int batch_;
};

}  // namespace rulforge
