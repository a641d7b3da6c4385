#pragma once

#include "tiltshift/depth_pointcloud.hpp"
#include "tiltshift/geometry.hpp"
#include "tiltshift/lightfield_io.hpp"

namespace tiltshift {

/// Keyboard plane model: a point at distance `z` along the reference optical
/// axis and a normal obtained by tilting the axis, n = R_x(rot_x) R_y(rot_y)
/// R_z(rot_z) e_z in the reference camera frame. R_z acts on e_z first and so
/// never changes the plane; it is accepted for completeness.
struct ManualPlaneState {
  double z = 1.0;
  double rot_x = 0.0;  // degrees, open interval (-90, 90)
  double rot_y = 0.0;
  double rot_z = 0.0;
};

struct PlaneAdjustment {
  double dz = 0.0;
  double drot_x = 0.0;
  double drot_y = 0.0;
};

/// Pixels searched around an invalid click for the nearest valid depth.
inline constexpr int kClickSearchRadius = 3;

/// Plane through the clicked pixel's reprojected depth, with the normal map's
/// normal there. Throws InvalidPixel if nothing valid lies within
/// kClickSearchRadius of `uv`.
RefocusPlane plane_from_click(const LightFieldDataset& ds, ViewIndex ref_view, const Vec2& uv,
                              const NormalMap& normal_map);

/// Plane through three points with p = a and n = (b - a) x (c - a), flipped
/// to face `viewpoint`. Throws CollinearPoints for degenerate triples.
RefocusPlane plane_from_three_points(const Vec3& a, const Vec3& b, const Vec3& c,
                                     const Vec3& viewpoint = Vec3::Zero());

/// Throws OutOfRange unless z > 0 and both tilts lie in (-90, 90) degrees.
RefocusPlane plane_from_manual(const ManualPlaneState& state, const CameraCalibration& ref_cal);

/// Keyboard parameters of an arbitrary plane: its intersection with the
/// optical axis and the tilts of its axis-facing normal. Throws OutOfRange
/// for planes parallel to the axis or crossing it behind the camera.
ManualPlaneState manual_state_of(const RefocusPlane& plane, const CameraCalibration& ref_cal);

/// Applies keyboard steps to any plane. The result keeps the orientation of
/// the input normal and is anchored at the foot of the input point; a zero
/// step returns the input. Throws OutOfRange when the stepped state is invalid.
RefocusPlane adjust_plane(const RefocusPlane& plane, const PlaneAdjustment& delta,
                          const CameraCalibration& ref_cal);

}  // namespace tiltshift
