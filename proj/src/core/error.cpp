#include "error.hpp"

namespace eqcausal {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnboundSlot: return "UnboundSlot";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::NonFiniteIterate: return "NonFiniteIterate";
    case ErrorCode::SingularLeastSquares: return "SingularLeastSquares";
    case ErrorCode::ZeroNorm: return "ZeroNorm";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::ForwardNotConverged: return "ForwardNotConverged";
    case ErrorCode::AdjointNotConverged: return "AdjointNotConverged";
    case ErrorCode::MismatchedTargets: return "MismatchedTargets";
    case ErrorCode::ClampedModelSingular: return "ClampedModelSingular";
    case ErrorCode::PolicyArityMismatch: return "PolicyArityMismatch";
    case ErrorCode::InvalidPartition: return "InvalidPartition";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::SingularMatrix: return "SingularMatrix";
    case ErrorCode::SingularParameterization: return "SingularParameterization";
    case ErrorCode::TopologyViolation: return "TopologyViolation";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::SolveFailedDuringOptimization: return "SolveFailedDuringOptimization";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::NegativeEntry: return "NegativeEntry";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace eqcausal
