#include "dichotomy/error.hpp"

namespace dichotomy {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::EigenvalueOnCut: return "EigenvalueOnCut";
    case ErrorKind::NonConvergence: return "NonConvergence";
    case ErrorKind::NegativeTime: return "NegativeTime";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::SamplerExhausted: return "SamplerExhausted";
    case ErrorKind::NonContraction: return "NonContraction";
    case ErrorKind::MaxIterExceeded: return "MaxIterExceeded";
    case ErrorKind::BoundaryDimensionMismatch: return "BoundaryDimensionMismatch";
    case ErrorKind::NonUniformGrid: return "NonUniformGrid";
    case ErrorKind::IllPosedProblem: return "IllPosedProblem";
    case ErrorKind::GapViolated: return "GapViolated";
    case ErrorKind::AlphaBelowThreshold: return "AlphaBelowThreshold";
    case ErrorKind::EmptyTable: return "EmptyTable";
    case ErrorKind::NoAdmissibleEpsHat: return "NoAdmissibleEpsHat";
    case ErrorKind::AngleConditionViolated: return "AngleConditionViolated";
    case ErrorKind::DomainEscape: return "DomainEscape";
    case ErrorKind::SpectralConditionViolated: return "SpectralConditionViolated";
    case ErrorKind::ThetaNotContractive: return "ThetaNotContractive";
    case ErrorKind::SigmaTooLarge: return "SigmaTooLarge";
    case ErrorKind::OrbitInconsistent: return "OrbitInconsistent";
    case ErrorKind::GridTooCoarse: return "GridTooCoarse";
    case ErrorKind::InvariantFailure: return "InvariantFailure";
    case ErrorKind::TubeEscape: return "TubeEscape";
    case ErrorKind::HypothesisFailure: return "HypothesisFailure";
    case ErrorKind::IntersectionFailure: return "IntersectionFailure";
    case ErrorKind::OrbitLeavesTube: return "OrbitLeavesTube";
    case ErrorKind::NotOnCenterStable: return "NotOnCenterStable";
    case ErrorKind::UnknownProblem: return "UnknownProblem";
    case ErrorKind::ParamOutOfRange: return "ParamOutOfRange";
    case ErrorKind::ConfigInvalid: return "ConfigInvalid";
    case ErrorKind::StageFailed: return "StageFailed";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& detail, std::optional<double> value)
    : std::runtime_error(std::string(to_string(kind)) + ": " + detail), kind_(kind), value_(value) {}

}  // namespace dichotomy
