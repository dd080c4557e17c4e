#pragma once

#include <stdexcept>
#include <string>

namespace dcm {

/// Root of every error raised by the library. The CLI maps subclasses onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An argument is outside its allowed domain (nonpositive beta, unknown enum name, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Input data violates an invariant (negative depth, non-finite pixels, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Tensor or image dimensions do not fit the operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Transmission fell below the inversion floor somewhere in the map.
class DegenerateTransmissionError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class DatasetError : public Error {
 public:
  using Error::Error;
};

/// A loss or metric produced NaN/Inf. `component()` names the offending term.
class NumericError : public Error {
 public:
  NumericError(std::string component, const std::string& what)
      : Error(what), component_(std::move(component)) {}
  const std::string& component() const noexcept { return component_; }

 private:
  std::string component_;
};

/// Malformed configuration document; `key()` names the bad entry.
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& what) : Error(what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

/// Archive content does not match its recorded hash, or the file is truncated.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

/// Archive is intact but cannot be loaded into the requested architecture.
class IncompatibleError : public Error {
 public:
  using Error::Error;
};

/// Training stopped because a loss component went non-finite.
class TrainingAborted : public Error {
 public:
  using Error::Error;
};

}  // namespace dcm
