#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kgaudit {

// Bad caller input: shapes, ranges, unknown names.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Input is well-formed but violates a domain rule (rating out of 1..5,
// a paper with two venues, an empty class).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Numerical failure: SVD non-convergence, zero variance, divergence.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::string file, std::size_t line, const std::string& what)
      : std::runtime_error(file + ":" + std::to_string(line) + ": " + what),
        file_(std::move(file)),
        line_(line) {}

  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

}  // namespace kgaudit
