#pragma once

#include <stdexcept>
#include <string>

namespace invdist {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A parameter is out of its admissible range. `parameter()` names it
/// (e.g. "schedule.theta").
class ParameterError : public Error {
 public:
  ParameterError(std::string parameter, const std::string& what)
      : Error(parameter + ": " + what), parameter_(std::move(parameter)) {}
  const std::string& parameter() const noexcept { return parameter_; }

 private:
  std::string parameter_;
};

/// A step/weight sequence violates gamma_n > 0, gamma_n -> 0, Gamma_n -> inf
/// or H_n -> inf.
class ScheduleError : public ParameterError {
 public:
  using ParameterError::ParameterError;
};

class ModelError : public Error {
 public:
  using Error::Error;
};

class EvaluationError : public Error {
 public:
  using Error::Error;
};

class MergeError : public Error {
 public:
  using Error::Error;
};

/// Operation requested on an accumulator that cannot serve it (e.g. empty
/// reservoir).
class StateError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Matrix that must be positive definite is not.
class PositiveDefiniteError : public PreconditionError {
 public:
  PositiveDefiniteError(const std::string& what, double min_eigenvalue)
      : PreconditionError(what), min_eigenvalue_(min_eigenvalue) {}
  double min_eigenvalue() const noexcept { return min_eigenvalue_; }

 private:
  double min_eigenvalue_;
};

class GridTooSmallError : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

class NoStationaryLawError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public ParameterError {
 public:
  using ParameterError::ParameterError;
};

}  // namespace invdist
