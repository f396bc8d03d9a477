#pragma once

#include <stdexcept>
#include <string>

namespace spconf {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input violates a documented precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Malformed text input; line() is 1-based, 0 when unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Numerical breakdown (non-finite target at initialisation, failed factorisation).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace spconf
