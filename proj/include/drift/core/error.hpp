#pragma once

#include <stdexcept>
#include <string>

namespace drift {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Two inputs disagree on shape or resolution.
class ShapeError : public Error {
  public:
    using Error::Error;
};

/// A soft channel has no positive mass (object vanished from the prediction).
class EmptyObjectError : public Error {
  public:
    using Error::Error;
};

/// Malformed or unreadable file on disk.
class IoError : public Error {
  public:
    using Error::Error;
};

/// Invalid configuration value or combination.
class ConfigError : public Error {
  public:
    using Error::Error;
};

/// A component was used before it was ready (missing weights, unloaded model).
class NotInitializedError : public Error {
  public:
    using Error::Error;
};

} // namespace drift
