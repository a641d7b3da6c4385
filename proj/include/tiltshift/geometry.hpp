#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/LU>
#include <optional>

namespace tiltshift {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Planes closer than this to the reference camera center are degenerate.
inline constexpr double kPlaneEpsilon = 1e-6;

/// Pinhole camera. `R` rotates world directions into the camera frame and `t`
/// is the camera center in world coordinates, so a world point X lands at
/// camera coordinates R (X - t). When the world frame is the reference
/// camera's frame, `t` is the offset from the reference camera to this one.
class CameraCalibration {
 public:
  /// Throws MalformedCalibration unless K is upper triangular with a positive
  /// diagonal and R is a proper rotation (within 1e-9).
  CameraCalibration(const Mat3& K, const Mat3& R, const Vec3& t);

  static CameraCalibration from_intrinsics(double fx, double fy, double cx, double cy,
                                           const Mat3& R = Mat3::Identity(),
                                           const Vec3& t = Vec3::Zero());

  const Mat3& K() const { return K_; }
  const Mat3& K_inv() const { return K_inv_; }
  const Mat3& R() const { return R_; }
  const Vec3& t() const { return t_; }
  const Vec3& center() const { return t_; }

  /// Viewing direction (+z of the camera frame) in world coordinates.
  Vec3 optical_axis() const { return R_.transpose().col(2); }

  Vec3 to_camera(const Vec3& world) const { return R_ * (world - t_); }
  Vec3 to_world(const Vec3& camera) const { return R_.transpose() * camera + t_; }

  /// Pixel of a world point. Throws NonPositiveDepth for points behind the camera.
  Vec2 project(const Vec3& world) const;

  /// Same calibration with the pixel grid rescaled by `factor` about the
  /// pixel-center origin (0.5 gives a half-resolution grid).
  CameraCalibration rescaled(double factor) const;

 private:
  Mat3 K_;
  Mat3 K_inv_;
  Mat3 R_;
  Vec3 t_;
};

/// Plane through `point` with unit `normal`. The normal is re-normalized on
/// construction; a zero normal throws InvalidArgument.
class RefocusPlane {
 public:
  RefocusPlane(const Vec3& point, const Vec3& normal);

  const Vec3& point() const { return p_; }
  const Vec3& normal() const { return n_; }

  /// Signed distance of x from the plane along the normal.
  double signed_distance(const Vec3& x) const { return (x - p_).dot(n_); }
  RefocusPlane flipped() const { return {p_, -n_}; }

 private:
  Vec3 p_;
  Vec3 n_;
};

/// Homogeneous pixel-to-pixel map from the reference view into a target view.
struct ProjectionMap {
  Mat3 P = Mat3::Identity();
};

/// d = (p - t_ref) . n, signed. Throws DegeneratePlane when |d| < kPlaneEpsilon.
double plane_distance(const RefocusPlane& plane, const CameraCalibration& ref_cal);

/// Plane-induced homography between normalized image coordinates of the
/// reference camera and `cal`, both expressed in the reference camera frame:
/// H = R (I - t n^T / d), which is R - t n^T / d whenever R = I.
Mat3 homography(const CameraCalibration& cal, const RefocusPlane& plane, double d);

/// Expresses `target` in the frame of `ref`: rotation R_t R_ref^T and center
/// R_ref (t_target - t_ref). K is kept.
CameraCalibration relative_to(const CameraCalibration& target, const CameraCalibration& ref);

/// P = K_target H K_ref^-1 for the plane given in world coordinates.
ProjectionMap projection_map(const CameraCalibration& target_cal,
                             const CameraCalibration& ref_cal, const RefocusPlane& plane);

/// Homogeneous multiply and perspective divide. Throws PointAtInfinity when
/// |w| < 1e-12.
Vec2 apply_projection(const ProjectionMap& map, const Vec2& uv);

/// Non-throwing variant used by the warp kernels; rejects w <= 1e-12, which
/// also drops points that fall behind the target camera.
std::optional<Vec2> try_apply_projection(const ProjectionMap& map, const Vec2& uv);

}  // namespace tiltshift
