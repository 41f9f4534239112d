#pragma once

#include <stdexcept>
#include <string>

namespace termreward {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller handed in something that violates a documented precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A file or stream could not be read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed on-disk or on-wire content (table files, Pharaoh lines, JSON).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Table file written by an incompatible version.
class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// The semantic scorer could not produce a score. Never mapped to score 0.
class ScorerUnavailable : public Error {
 public:
  using Error::Error;
};

}  // namespace termreward
