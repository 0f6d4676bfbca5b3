#pragma once

#include <stdexcept>
#include <string>

namespace gcahng {

/// Base class for every error raised by the library. The CLI maps the
/// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or hyper-parameter (exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed feature/config/checkpoint file contents.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Dataset cannot satisfy the requested N x m batch layout.
class SamplingError : public Error {
 public:
  using Error::Error;
};

/// Tensor shape or dimension mismatch.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or undefined numeric operation (exit code 3).
class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace gcahng
