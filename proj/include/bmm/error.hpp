#pragma once

#include <stdexcept>
#include <string>

namespace bmm {

/// Base of every error raised by the library. The CLI maps each subclass to
/// its own exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed file: bad magic, truncated payload, unparsable token.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Well-formed input that violates a data invariant (duplicate id, NaN, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Bad caller-supplied argument (k > n, budget out of range, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Persisted artifact written by an incompatible format version.
class VersionError : public Error {
 public:
  using Error::Error;
};

/// A mode has too few rows to estimate a covariance.
class InsufficientSamplesError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

/// More target modes than candidate server modes.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

}  // namespace bmm
