#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace specmoment {

enum class ErrorCode {
  InvalidInput,
  NotPositiveDefinite,
  UnstableMatrix,
  NotSPD,
  Unstable,
  Unreachable,
  RankDeficientB,
  DuplicatePole,
  UnstablePole,
  NonRealResult,
  NotCoercive,
  SingularDensity,
  NotInDomain,
  DegenerateKernel,
  NotPositiveOnCircle,
  Infeasible,
  SingularSigma,
  NotConverged,
  GridTooCoarse,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message)
      : std::runtime_error(std::move(message)), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidInput: return "InvalidInput";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::UnstableMatrix: return "UnstableMatrix";
    case ErrorCode::NotSPD: return "NotSPD";
    case ErrorCode::Unstable: return "Unstable";
    case ErrorCode::Unreachable: return "Unreachable";
    case ErrorCode::RankDeficientB: return "RankDeficientB";
    case ErrorCode::DuplicatePole: return "DuplicatePole";
    case ErrorCode::UnstablePole: return "UnstablePole";
    case ErrorCode::NonRealResult: return "NonRealResult";
    case ErrorCode::NotCoercive: return "NotCoercive";
    case ErrorCode::SingularDensity: return "SingularDensity";
    case ErrorCode::NotInDomain: return "NotInDomain";
    case ErrorCode::DegenerateKernel: return "DegenerateKernel";
    case ErrorCode::NotPositiveOnCircle: return "NotPositiveOnCircle";
    case ErrorCode::Infeasible: return "Infeasible";
    case ErrorCode::SingularSigma: return "SingularSigma";
    case ErrorCode::NotConverged: return "NotConverged";
    case ErrorCode::GridTooCoarse: return "GridTooCoarse";
  }
  return "Unknown";
}

// Process exit code contract: 0 success, 2 input error, 3 infeasible,
// 4 not converged, 5 grid too coarse.
inline int exit_code_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::Infeasible:
    case ErrorCode::SingularSigma:
      return 3;
    case ErrorCode::NotConverged:
      return 4;
    case ErrorCode::GridTooCoarse:
      return 5;
    default:
      return 2;
  }
}

}  // namespace specmoment
