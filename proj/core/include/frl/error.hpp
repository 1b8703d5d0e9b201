#pragma once

#include <stdexcept>
#include <string>

namespace frl {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent configuration (specs, presets, CLI config).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// An argument outside the domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Iterative numerics failed, or a non-finite value was produced.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Tensor or table dimensions do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An object was used before it reached the required state.
class StateError : public Error {
 public:
  using Error::Error;
};

/// A learned model lacks data for cells the caller needs.
class ModelCoverageError : public Error {
 public:
  using Error::Error;
};

/// Logged data violates a precondition (e.g. zero behavior propensity).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Model selection found no feasible candidate.
class SelectionError : public Error {
 public:
  using Error::Error;
};

}  // namespace frl
