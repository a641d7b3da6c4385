#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tiltshift {

enum class ErrorCode {
  MissingView,
  DimensionMismatch,
  MalformedManifest,
  MalformedCalibration,
  IoFailure,
  DegeneratePlane,
  PointAtInfinity,
  SingularProjection,
  ZeroDisparity,
  NonPositiveDepth,
  NoDisparity,
  TooFewPoints,
  EmptyAperture,
  OutOfHull,
  InvalidPixel,
  CollinearPoints,
  OutOfRange,
  PlaneBehindCamera,
  InvalidArgument,
  NoPlane,
  NotFound,
};

std::string_view to_string(ErrorCode code);

/// Single exception type for every engine failure; `code()` identifies the
/// failure class so callers (CLI exit codes, HTTP payloads) can dispatch on it.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace tiltshift
