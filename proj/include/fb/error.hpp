#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fb {

enum class ErrorCode {
  UnknownBuiltin,
  NonPositiveVolumeTarget,
  PeriodMismatch,
  NegativeU,
  NoWitnessFound,
  MarginViolation,
  Diverged,
  NoProgress,
  LinearSolveFailure,
  BracketFailure,
  BoxOverflow,
  InfeasiblePlan,
  NotPeriodic,
  EmptySupport,
  LambdaNonPositive,
  RadiiOutOfRange,
  NegativeOnSphere,
  NotSPD,
  OutOfBox,
  NotBoundaryPoint,
  ParseError,
  UnknownKey,
  BadFormat,
  InvalidArgument,
};

std::string_view to_string(ErrorCode code);

/// Exception carrying a machine-readable code; every failure path of the
/// library goes through this type.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownBuiltin: return "UnknownBuiltin";
    case ErrorCode::NonPositiveVolumeTarget: return "NonPositiveVolumeTarget";
    case ErrorCode::PeriodMismatch: return "PeriodMismatch";
    case ErrorCode::NegativeU: return "NegativeU";
    case ErrorCode::NoWitnessFound: return "NoWitnessFound";
    case ErrorCode::MarginViolation: return "MarginViolation";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::NoProgress: return "NoProgress";
    case ErrorCode::LinearSolveFailure: return "LinearSolveFailure";
    case ErrorCode::BracketFailure: return "BracketFailure";
    case ErrorCode::BoxOverflow: return "BoxOverflow";
    case ErrorCode::InfeasiblePlan: return "InfeasiblePlan";
    case ErrorCode::NotPeriodic: return "NotPeriodic";
    case ErrorCode::EmptySupport: return "EmptySupport";
    case ErrorCode::LambdaNonPositive: return "LambdaNonPositive";
    case ErrorCode::RadiiOutOfRange: return "RadiiOutOfRange";
    case ErrorCode::NegativeOnSphere: return "NegativeOnSphere";
    case ErrorCode::NotSPD: return "NotSPD";
    case ErrorCode::OutOfBox: return "OutOfBox";
    case ErrorCode::NotBoundaryPoint: return "NotBoundaryPoint";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::UnknownKey: return "UnknownKey";
    case ErrorCode::BadFormat: return "BadFormat";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace fb
