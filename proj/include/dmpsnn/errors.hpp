#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dmpsnn {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or dimension mismatch between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration values (negative widths, bad enum strings, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Strict-schema violations in JSON configs and data files.
class SchemaError : public Error {
 public:
  using Error::Error;
  SchemaError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_ = 0;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace dmpsnn
