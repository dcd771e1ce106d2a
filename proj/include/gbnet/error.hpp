#pragma once

#include <stdexcept>
#include <string>

namespace gbnet {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid configuration (zero dimensions, bad hyperparameters, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Tensor/vector shape mismatch.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Bad input data (wrong labels, empty sets, incompatible task).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// API contract violation (e.g. backward with a stale forward cache).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// File I/O failure.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Text parse failure; carries a 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& msg, std::size_t line)
      : Error(msg + " (line " + std::to_string(line) + ")"), line_(line) {}
  explicit ParseError(const std::string& msg) : Error(msg), line_(0) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

}  // namespace gbnet
