#pragma once

#include <stdexcept>
#include <string>

namespace sacc {

/// Base class of every error raised by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible shapes or extents.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Class label or element index outside its valid range.
class IndexError : public Error {
 public:
  using Error::Error;
};

/// Invalid or unsupported configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Object is not in a state that permits the requested operation.
class StateError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition or freeze contract was broken.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// Malformed or empty user input.
class InputError : public Error {
 public:
  using Error::Error;
};

/// File system or decoding failure; the message carries the file name.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace sacc
