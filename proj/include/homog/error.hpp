#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace homog {

enum class ErrorCode {
  DegenerateBasis,
  RankDeficient,
  UnknownModel,
  NonPositivePhase,
  InvalidFraction,
  SingularCellSystem,
  NonConvergedSolve,
  MarginTooSmall,
  IncommensurateEps,
  ScaleSeparationViolated,
  IncommensurateTorus,
  ShiftOnSpectrum,
  ResidualTooLarge,
  KernelGapTooSmall,
  EigensolveFailed,
  SmoothingRequired,
  ForbiddenZeta,
  MeshMismatch,
  TooFewPoints,
  InsufficientGrid,
  InvalidArgument,
  ConfigError,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DegenerateBasis: return "DegenerateBasis";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::UnknownModel: return "UnknownModel";
    case ErrorCode::NonPositivePhase: return "NonPositivePhase";
    case ErrorCode::InvalidFraction: return "InvalidFraction";
    case ErrorCode::SingularCellSystem: return "SingularCellSystem";
    case ErrorCode::NonConvergedSolve: return "NonConvergedSolve";
    case ErrorCode::MarginTooSmall: return "MarginTooSmall";
    case ErrorCode::IncommensurateEps: return "IncommensurateEps";
    case ErrorCode::ScaleSeparationViolated: return "ScaleSeparationViolated";
    case ErrorCode::IncommensurateTorus: return "IncommensurateTorus";
    case ErrorCode::ShiftOnSpectrum: return "ShiftOnSpectrum";
    case ErrorCode::ResidualTooLarge: return "ResidualTooLarge";
    case ErrorCode::KernelGapTooSmall: return "KernelGapTooSmall";
    case ErrorCode::EigensolveFailed: return "EigensolveFailed";
    case ErrorCode::SmoothingRequired: return "SmoothingRequired";
    case ErrorCode::ForbiddenZeta: return "ForbiddenZeta";
    case ErrorCode::MeshMismatch: return "MeshMismatch";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::InsufficientGrid: return "InsufficientGrid";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so the
/// CLI can turn it into a machine-readable error record.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace homog
