#pragma once

#include <stdexcept>
#include <string>

namespace wdro {

// Base class; everything thrown by the library derives from it.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
  using Error::Error;
};

// Numeric failures. The CLI maps these to exit code 2.
struct NumericError : Error {
  using Error::Error;
};

struct DomainError : NumericError {
  using NumericError::NumericError;
};

struct NotSmooth : NumericError {
  using NumericError::NumericError;
};

struct Degenerate : NumericError {
  using NumericError::NumericError;
};

// Squared loss has no finite f-component; callers take the squared path.
struct UseSquaredSpecialization : Degenerate {
  using Degenerate::Degenerate;
};

struct BracketTooSmall : NumericError {
  using NumericError::NumericError;
};

struct BracketError : NumericError {
  using NumericError::NumericError;
};

struct UnboundedMinimizer : NumericError {
  using NumericError::NumericError;
};

struct ConcavityViolation : NumericError {
  using NumericError::NumericError;
};

struct DivergedError : NumericError {
  using NumericError::NumericError;
};

struct SolverError : NumericError {
  using NumericError::NumericError;
};

struct ExperimentError : NumericError {
  using NumericError::NumericError;
};

struct EvaluationError : NumericError {
  EvaluationError(const std::string& what, double g_node, double z_node)
      : NumericError(what), g(g_node), z(z_node) {}
  double g;
  double z;
};

}  // namespace wdro
