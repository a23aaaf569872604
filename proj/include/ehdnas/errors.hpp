#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ehdnas {

// Base for every error the toolkit raises. `is_validation()` separates bad
// user input (CLI exit code 1) from internal failures (exit code 2).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual bool is_validation() const noexcept { return true; }
};

class InvalidArch : public Error {
 public:
  using Error::Error;
};

class InvalidConfig : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
  bool is_validation() const noexcept override { return false; }
};

class InfeasibleAllocation : public Error {
 public:
  using Error::Error;
};

class EmptyDataset : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class VersionMismatch : public Error {
 public:
  using Error::Error;
};

class MismatchedSpace : public Error {
 public:
  using Error::Error;
};

class SpaceTooLarge : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}

  // 1-based line of the offending record, 0 when not line-oriented.
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace ehdnas
