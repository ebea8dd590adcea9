#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace slopelab {

enum class ErrorCode {
  EmptyInput,
  DuplicateTimePoint,
  InconsistentArm,
  MissingBaseline,
  NonFiniteValue,
  InvalidArm,
  DomainError,
  WeightError,
  InvalidConfig,
  NotPD,
  SingularDesign,
  NoConvergence,
  DegenerateHinge,
  AllCandidatesFailed,
  ArmEmptyAfterExclusion,
  EmptyCell,
  UnsupportedInterval,
  TooFewEstimates,
  ParseError,
};

constexpr std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::DuplicateTimePoint: return "DuplicateTimePoint";
    case ErrorCode::InconsistentArm: return "InconsistentArm";
    case ErrorCode::MissingBaseline: return "MissingBaseline";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::InvalidArm: return "InvalidArm";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::WeightError: return "WeightError";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::NotPD: return "NotPD";
    case ErrorCode::SingularDesign: return "SingularDesign";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::DegenerateHinge: return "DegenerateHinge";
    case ErrorCode::AllCandidatesFailed: return "AllCandidatesFailed";
    case ErrorCode::ArmEmptyAfterExclusion: return "ArmEmptyAfterExclusion";
    case ErrorCode::EmptyCell: return "EmptyCell";
    case ErrorCode::UnsupportedInterval: return "UnsupportedInterval";
    case ErrorCode::TooFewEstimates: return "TooFewEstimates";
    case ErrorCode::ParseError: return "ParseError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so that
/// callers (the CLI in particular) can map it to an exit status and a name.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(error_name(code)) + ": " + detail), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  std::string_view name() const noexcept { return error_name(code_); }

 private:
  ErrorCode code_;
};

}  // namespace slopelab
