#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace unravel {

enum class ErrorCode {
  DimensionMismatch,
  NotHermitian,
  NotIdempotent,
  NotOrthogonal,
  NotComplete,
  DuplicateEigenvalue,
  NotUnitary,
  ZeroState,
  NotADensityMatrix,
  NotASimplexPoint,
  InvalidConfig,
  UnstableStep,
  InsufficientSamples,
  GridMismatch,
  TooManyUndecided,
  TooManyFailures,
  ImpossibleOutcome,
  UnresolvedRuns,
  Io,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// One structural defect found while validating a projector family. `second`
// is set for pairwise defects (orthogonality, duplicate eigenvalues).
struct Violation {
  ErrorCode code;
  int first = -1;
  int second = -1;
  double residual = 0.0;
};

// Thrown by ProjectorFamily::validate; carries every defect, not just the first.
class FamilyError : public Error {
 public:
  explicit FamilyError(std::vector<Violation> violations);

  const std::vector<Violation>& violations() const noexcept { return violations_; }
  bool has(ErrorCode code) const;

 private:
  std::vector<Violation> violations_;
};

// A failure inside a time integration, tagged with the simulated time.
class StepError : public Error {
 public:
  StepError(ErrorCode code, double time, const std::string& message)
      : Error(code, message + " at t=" + std::to_string(time)), time_(time) {}

  double time() const noexcept { return time_; }

 private:
  double time_;
};

}  // namespace unravel
