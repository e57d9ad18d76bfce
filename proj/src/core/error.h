#pragma once

#include <stdexcept>
#include <string>

namespace refbase {

// Base for all structured errors. Subclasses map onto the CLI exit-code
// contract: config/data/shape problems are validation (exit 2), numeric
// faults and mid-run I/O failures are runtime aborts (exit 1).
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class NumericFault : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace refbase
