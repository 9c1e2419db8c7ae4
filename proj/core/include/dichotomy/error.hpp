#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dichotomy {

enum class ErrorKind {
  EigenvalueOnCut,
  NonConvergence,
  NegativeTime,
  DimensionMismatch,
  SamplerExhausted,
  NonContraction,
  MaxIterExceeded,
  BoundaryDimensionMismatch,
  NonUniformGrid,
  IllPosedProblem,
  GapViolated,
  AlphaBelowThreshold,
  EmptyTable,
  NoAdmissibleEpsHat,
  AngleConditionViolated,
  DomainEscape,
  SpectralConditionViolated,
  ThetaNotContractive,
  SigmaTooLarge,
  OrbitInconsistent,
  GridTooCoarse,
  InvariantFailure,
  TubeEscape,
  HypothesisFailure,
  IntersectionFailure,
  OrbitLeavesTube,
  NotOnCenterStable,
  UnknownProblem,
  ParamOutOfRange,
  ConfigInvalid,
  StageFailed,
};

std::string_view to_string(ErrorKind kind);

/// Single exception type for the toolkit. `value` carries the quantitative
/// payload where one exists (contraction factor, gap deficit, ...).
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& detail, std::optional<double> value = std::nullopt);

  ErrorKind kind() const noexcept { return kind_; }
  std::optional<double> value() const noexcept { return value_; }

 private:
  ErrorKind kind_;
  std::optional<double> value_;
};

}  // namespace dichotomy
