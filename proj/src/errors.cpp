#include "tiltshift/errors.hpp"

namespace tiltshift {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingView: return "MissingView";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::MalformedManifest: return "MalformedManifest";
    case ErrorCode::MalformedCalibration: return "MalformedCalibration";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::DegeneratePlane: return "DegeneratePlane";
    case ErrorCode::PointAtInfinity: return "PointAtInfinity";
    case ErrorCode::SingularProjection: return "SingularProjection";
    case ErrorCode::ZeroDisparity: return "ZeroDisparity";
    case ErrorCode::NonPositiveDepth: return "NonPositiveDepth";
    case ErrorCode::NoDisparity: return "NoDisparity";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::EmptyAperture: return "EmptyAperture";
    case ErrorCode::OutOfHull: return "OutOfHull";
    case ErrorCode::InvalidPixel: return "InvalidPixel";
    case ErrorCode::CollinearPoints: return "CollinearPoints";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::PlaneBehindCamera: return "PlaneBehindCamera";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NoPlane: return "NoPlane";
    case ErrorCode::NotFound: return "NotFound";
  }
  return "Unknown";
}

}  // namespace tiltshift
