#pragma once

#include <stdexcept>
#include <string>

namespace eqcausal {

enum class ErrorCode {
  // expression evaluation
  UnboundSlot,
  ShapeMismatch,
  DomainError,
  // fixed-point solvers
  NonFiniteIterate,
  SingularLeastSquares,
  ZeroNorm,
  // models and gradients
  InvalidSpec,
  ForwardNotConverged,
  AdjointNotConverged,
  MismatchedTargets,
  ClampedModelSingular,
  PolicyArityMismatch,
  InvalidPartition,
  DimensionMismatch,
  SingularMatrix,
  SingularParameterization,
  TopologyViolation,
  // optimization
  NonFiniteGradient,
  SolveFailedDuringOptimization,
  // io
  ParseError,
  NegativeEntry,
  SchemaError,
  IoError,
  InvalidArgument,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace eqcausal
