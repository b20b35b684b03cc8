#pragma once

#include <stdexcept>
#include <string>

namespace icleval {

// Base of every error the library throws. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration, template or run parameters (exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent dataset content.
class DataError : public Error {
 public:
  using Error::Error;
};

// Any failure while obtaining scores from a backend (exit code 3).
class BackendError : public Error {
 public:
  using Error::Error;
};

// HTTP / connection failure that persisted through all retries.
class TransportError : public BackendError {
 public:
  using BackendError::BackendError;
};

// Backend answered, but the payload violates the completions contract.
class ProtocolError : public BackendError {
 public:
  using BackendError::BackendError;
};

// Too few z-score candidates to build the high/low sets (exit code 4).
class SelectionError : public Error {
 public:
  using Error::Error;
};

// Exhaustive enumeration refused or found a nondeterministic backend.
class OracleError : public Error {
 public:
  using Error::Error;
};

}  // namespace icleval
