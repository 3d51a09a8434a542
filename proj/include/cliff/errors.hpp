// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace cliff {

/// Base of every error thrown by the library. `category()` is the short tag
/// the CLI prints in its `error[<category>]:` prefix.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* category() const noexcept { return "runtime"; }
};

class DimensionError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "dimension"; }
};

class IndexError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "index"; }
};

class ParameterError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "parameter"; }
};

class DataError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "data"; }
};

class StateError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "state"; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "config"; }
};

class RegistrationError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "registration"; }
};

class CheckpointError : public Error {
 public:
  enum class Kind { Io, BadMagic, VersionMismatch, Truncated, ChecksumMismatch, Malformed };

  CheckpointError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }
  const char* category() const noexcept override { return "checkpoint"; }

 private:
  Kind kind_;
};

}  // namespace cliff
