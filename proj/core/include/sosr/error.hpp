#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sosr {

enum class ErrorCode {
  kInvalidArgument,
  kZeroNorm,
  kDimensionMismatch,
  kNoNegatives,
  kNondifferentiable,
  kDivergence,
  kDegenerateConcentration,
  kMissingLabel,
  kInfeasible,
  kIo,
  kBadMagic,
  kUnsupportedVersion,
  kTruncated,
  kLabelCountMismatch,
  kNormViolation,
  kNotNormalized,
  kBadSidecar,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Validation errors are caller mistakes (bad shapes, bad files, infeasible
/// requests); everything else is a runtime or numeric failure.
bool is_validation_error(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace sosr
