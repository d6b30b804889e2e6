#pragma once

#include <stdexcept>
#include <string>

namespace monet {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes or extents do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A configuration violates a structural invariant.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Token count does not form a valid grid.
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// Malformed, truncated or mismatched file content.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Bad caller-provided value (class index, seed node, ...).
class InputError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf encountered where a finite value is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Symbolic expansion exceeded the configured term cap.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// An operation could not be classified by the op audit.
class AuditError : public Error {
 public:
  using Error::Error;
};

/// ODE integration produced a non-finite state.
class DivergenceError : public NumericError {
 public:
  DivergenceError(const std::string& what, double time) : NumericError(what), time_(time) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

}  // namespace monet
