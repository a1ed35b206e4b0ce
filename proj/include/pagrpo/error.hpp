#pragma once

#include <stdexcept>
#include <string>

namespace pagrpo {

// Error categories map one-to-one onto CLI exit codes (see cli.hpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration or command-line usage.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Bad or unreadable input data: instance files, logs, checkpoints.
class InputError : public Error {
 public:
  using Error::Error;
};

class InvalidPermutation : public InputError {
 public:
  using InputError::InputError;
};

// A label that does not occur in the variant being decoded.
class ParseDomainError : public InputError {
 public:
  using InputError::InputError;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace pagrpo
