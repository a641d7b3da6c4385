#include "tiltshift/geometry.hpp"

#include <Eigen/LU>
#include <cmath>
#include <sstream>

#include "tiltshift/errors.hpp"

namespace tiltshift {

namespace {

constexpr double kRotationTolerance = 1e-9;
constexpr double kInfinityTolerance = 1e-12;

void validate_intrinsics(const Mat3& K) {
  const bool upper = K(1, 0) == 0.0 && K(2, 0) == 0.0 && K(2, 1) == 0.0;
  const bool positive = K(0, 0) > 0.0 && K(1, 1) > 0.0 && K(2, 2) > 0.0;
  if (!upper || !positive || !K.allFinite()) {
    std::ostringstream msg;
    msg << "intrinsic matrix must be upper triangular with positive diagonal, got\n" << K;
    throw Error(ErrorCode::MalformedCalibration, msg.str());
  }
}

void validate_rotation(const Mat3& R) {
  const double orth = (R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff();
  const double det = R.determinant();
  if (!R.allFinite() || orth > kRotationTolerance || std::abs(det - 1.0) > kRotationTolerance) {
    std::ostringstream msg;
    msg << "R is not a proper rotation (|R^T R - I| = " << orth << ", det = " << det << ")";
    throw Error(ErrorCode::MalformedCalibration, msg.str());
  }
}

}  // namespace

CameraCalibration::CameraCalibration(const Mat3& K, const Mat3& R, const Vec3& t)
    : K_(K), R_(R), t_(t) {
  validate_intrinsics(K_);
  validate_rotation(R_);
  if (!t_.allFinite()) throw Error(ErrorCode::MalformedCalibration, "translation is not finite");
  K_inv_ = K_.inverse();
}

CameraCalibration CameraCalibration::from_intrinsics(double fx, double fy, double cx, double cy,
                                                     const Mat3& R, const Vec3& t) {
  Mat3 K;
  K << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return {K, R, t};
}

Vec2 CameraCalibration::project(const Vec3& world) const {
  const Vec3 cam = to_camera(world);
  if (!(cam.z() > 0.0)) throw Error(ErrorCode::NonPositiveDepth, "point is behind the camera");
  const Vec3 x = K_ * cam;
  return {x.x() / x.z(), x.y() / x.z()};
}

CameraCalibration CameraCalibration::rescaled(double factor) const {
  Mat3 S;
  const double shift = 0.5 * (factor - 1.0);
  S << factor, 0.0, shift, 0.0, factor, shift, 0.0, 0.0, 1.0;
  return {S * K_, R_, t_};
}

RefocusPlane::RefocusPlane(const Vec3& point, const Vec3& normal) : p_(point) {
  const double len = normal.norm();
  if (!(len > 0.0) || !std::isfinite(len) || !point.allFinite()) {
    throw Error(ErrorCode::InvalidArgument, "plane needs a finite point and non-zero normal");
  }
  n_ = normal / len;
}

double plane_distance(const RefocusPlane& plane, const CameraCalibration& ref_cal) {
  const double d = (plane.point() - ref_cal.center()).dot(plane.normal());
  if (std::abs(d) < kPlaneEpsilon) {
    throw Error(ErrorCode::DegeneratePlane, "refocus plane passes through the reference camera");
  }
  return d;
}

Mat3 homography(const CameraCalibration& cal, const RefocusPlane& plane, double d) {
  if (std::abs(d) < kPlaneEpsilon) {
    throw Error(ErrorCode::DegeneratePlane, "plane distance is zero");
  }
  return cal.R() * (Mat3::Identity() - cal.t() * plane.normal().transpose() / d);
}

CameraCalibration relative_to(const CameraCalibration& target, const CameraCalibration& ref) {
  return {target.K(), target.R() * ref.R().transpose(), ref.R() * (target.center() - ref.center())};
}

ProjectionMap projection_map(const CameraCalibration& target_cal,
                             const CameraCalibration& ref_cal, const RefocusPlane& plane) {
  const double d = plane_distance(plane, ref_cal);
  const CameraCalibration rel = relative_to(target_cal, ref_cal);
  const RefocusPlane local(ref_cal.to_camera(plane.point()), ref_cal.R() * plane.normal());
  const Mat3 H = homography(rel, local, d);
  return {target_cal.K() * H * ref_cal.K_inv()};
}

Vec2 apply_projection(const ProjectionMap& map, const Vec2& uv) {
  const Vec3 x = map.P * Vec3(uv.x(), uv.y(), 1.0);
  if (std::abs(x.z()) < kInfinityTolerance) {
    throw Error(ErrorCode::PointAtInfinity, "pixel maps to infinity");
  }
  return {x.x() / x.z(), x.y() / x.z()};
}

std::optional<Vec2> try_apply_projection(const ProjectionMap& map, const Vec2& uv) {
  const Vec3 x = map.P * Vec3(uv.x(), uv.y(), 1.0);
  if (!(x.z() > kInfinityTolerance)) return std::nullopt;
  return Vec2(x.x() / x.z(), x.y() / x.z());
}

}  // namespace tiltshift
