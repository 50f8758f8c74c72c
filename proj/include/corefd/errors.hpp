#pragma once

#include <stdexcept>
#include <string>

namespace corefd {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor/array dimensions do not agree with what an operation needs.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A vector whose norm is at or below the normalization floor.
class DegenerateVectorError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an operation's precondition (non-scalar loss, non-real input, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// A metric is undefined for the input (e.g. only one class present).
class MetricUndefinedError : public Error {
 public:
  using Error::Error;
};

/// A box or index lies outside the image it refers to.
class BoundsError : public Error {
 public:
  using Error::Error;
};

/// A file on disk is missing, malformed, truncated or fails its checksum.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Invalid user configuration (unknown key, out-of-range value, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace corefd
