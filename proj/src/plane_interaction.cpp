#include "tiltshift/plane_interaction.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>

#include "tiltshift/errors.hpp"

namespace tiltshift {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

void validate(const ManualPlaneState& state) {
  const auto tilt_ok = [](double deg) { return std::isfinite(deg) && std::abs(deg) < 90.0; };
  if (!(state.z > 0.0) || !std::isfinite(state.z)) {
    throw Error(ErrorCode::OutOfRange, "plane distance must be positive");
  }
  if (!tilt_ok(state.rot_x) || !tilt_ok(state.rot_y)) {
    throw Error(ErrorCode::OutOfRange, "plane tilts must lie strictly between -90 and 90 degrees");
  }
}

// Nearest pixel (by squared distance, then scan order) within the search
// radius where `ok` holds.
template <typename Pred>
std::optional<std::pair<int, int>> nearest_valid(int u, int v, Pred&& ok) {
  std::optional<std::pair<int, int>> best;
  int best_d2 = kClickSearchRadius * kClickSearchRadius + 1;
  for (int dv = -kClickSearchRadius; dv <= kClickSearchRadius; ++dv) {
    for (int du = -kClickSearchRadius; du <= kClickSearchRadius; ++du) {
      const int d2 = du * du + dv * dv;
      if (d2 < best_d2 && ok(u + du, v + dv)) {
        best_d2 = d2;
        best = std::pair{u + du, v + dv};
      }
    }
  }
  return best;
}

}  // namespace

RefocusPlane plane_from_click(const LightFieldDataset& ds, ViewIndex ref_view, const Vec2& uv,
                              const NormalMap& normal_map) {
  if (uv.x() < -0.5 || uv.y() < -0.5 || uv.x() >= ds.width() - 0.5 || uv.y() >= ds.height() - 0.5) {
    throw Error(ErrorCode::InvalidPixel, "click outside the reference view");
  }
  const DepthModel depth(ds, ref_view);
  const int u = static_cast<int>(std::lround(uv.x()));
  const int v = static_cast<int>(std::lround(uv.y()));
  const auto hit = nearest_valid(u, v, [&](int x, int y) {
    return normal_map.valid(x, y) && depth.depth(x, y).has_value();
  });
  if (!hit) throw Error(ErrorCode::InvalidPixel, "no depth or normal near the clicked pixel");
  const auto [hu, hv] = *hit;
  return {*depth.point(hu, hv), normal_map.at(hu, hv)};
}

RefocusPlane plane_from_three_points(const Vec3& a, const Vec3& b, const Vec3& c,
                                     const Vec3& viewpoint) {
  const Vec3 ab = b - a;
  const Vec3 ac = c - a;
  const Vec3 n = ab.cross(ac);
  if (!(n.norm() >= 1e-9 * ab.norm() * ac.norm()) || n.norm() == 0.0) {
    throw Error(ErrorCode::CollinearPoints, "the three points do not span a plane");
  }
  const RefocusPlane plane(a, n);
  return plane.normal().dot(viewpoint - a) < 0.0 ? plane.flipped() : plane;
}

RefocusPlane plane_from_manual(const ManualPlaneState& state, const CameraCalibration& ref_cal) {
  validate(state);
  const Mat3 tilt = (Eigen::AngleAxisd(state.rot_x * kDegToRad, Vec3::UnitX()) *
                     Eigen::AngleAxisd(state.rot_y * kDegToRad, Vec3::UnitY()) *
                     Eigen::AngleAxisd(state.rot_z * kDegToRad, Vec3::UnitZ()))
                        .toRotationMatrix();
  const Vec3 normal_cam = tilt * Vec3::UnitZ();
  const Vec3 point = ref_cal.center() + state.z * ref_cal.optical_axis();
  return {point, ref_cal.R().transpose() * normal_cam};
}

ManualPlaneState manual_state_of(const RefocusPlane& plane, const CameraCalibration& ref_cal) {
  Vec3 n = ref_cal.R() * plane.normal();
  if (n.z() < 0.0) n = -n;
  if (n.z() < 1e-9) throw Error(ErrorCode::OutOfRange, "plane is parallel to the optical axis");
  ManualPlaneState state;
  state.z = (plane.point() - ref_cal.center()).dot(plane.normal()) /
            ref_cal.optical_axis().dot(plane.normal());
  if (!(state.z > 0.0)) {
    throw Error(ErrorCode::OutOfRange, "plane meets the optical axis behind the camera");
  }
  // R_x(a) R_y(b) e_z = (sin b, -sin a cos b, cos a cos b)
  state.rot_y = std::asin(std::clamp(n.x(), -1.0, 1.0)) / kDegToRad;
  state.rot_x = std::atan2(-n.y(), n.z()) / kDegToRad;
  return state;
}

RefocusPlane adjust_plane(const RefocusPlane& plane, const PlaneAdjustment& delta,
                          const CameraCalibration& ref_cal) {
  ManualPlaneState state = manual_state_of(plane, ref_cal);
  if (delta.dz == 0.0 && delta.drot_x == 0.0 && delta.drot_y == 0.0) return plane;
  state.z += delta.dz;
  state.rot_x += delta.drot_x;
  state.rot_y += delta.drot_y;
  const RefocusPlane stepped = plane_from_manual(state, ref_cal);
  // Anchor at the foot of the old point so overlays stay where the user placed them.
  const Vec3 anchor = plane.point() - stepped.signed_distance(plane.point()) * stepped.normal();
  const Vec3 normal = plane.normal().dot(ref_cal.optical_axis()) < 0.0 ? Vec3(-stepped.normal()) : stepped.normal();
  return {anchor, normal};
}

}  // namespace tiltshift
