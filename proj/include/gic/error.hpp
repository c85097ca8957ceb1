#pragma once

#include <stdexcept>
#include <string>

namespace gic {

// Error hierarchy. Everything derives from std::runtime_error so callers can
// catch broadly; the CLI maps UsageError/IoError/FormatError/ConfigError to
// exit code 2 and everything else to 1.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Misuse of the differentiation engine (e.g. backward on a non-scalar).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

}  // namespace gic
