#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "tiltshift/geometry.hpp"
#include "tiltshift/image.hpp"
#include "tiltshift/lightfield_io.hpp"
#include "tiltshift/refocus.hpp"

namespace tiltshift {

/// Affine map from plane points to texture pixels: texel (a, b) sits at
/// origin + a * texel_size * axis_u + b * texel_size * axis_v.
struct TextureFrame {
  Vec3 origin = Vec3::Zero();
  Vec3 axis_u = Vec3::UnitX();
  Vec3 axis_v = Vec3::UnitY();
  double texel_size = 0.01;

  static TextureFrame on_plane(const RefocusPlane& plane, double texel_size);
};

struct CameraGridOptions {
  int rows = 3;
  int cols = 3;
  int width = 64;
  int height = 64;
  double focal = 100.0;
  double baseline = 0.1;
  /// Random per-camera rotation (degrees) for non-rectified arrays.
  double jitter_deg = 0.0;
  std::uint64_t seed = 1;
};

/// A textured plane seen by a grid of pinhole cameras, row-major by (s, t).
struct SyntheticScene {
  RefocusPlane plane{Vec3(0.0, 0.0, 2.0), Vec3::UnitZ()};
  Image texture;
  TextureFrame frame;
  int grid_rows = 0;
  int grid_cols = 0;
  std::vector<CameraCalibration> cameras;
  int width = 0;
  int height = 0;

  const CameraCalibration& camera(ViewIndex idx) const {
    return cameras.at(static_cast<std::size_t>(idx.s) * grid_cols + idx.t);
  }
};

/// Camera (s, t) of a rectified array sits at ((s_c - s) B, (t_c - t) B, 0)
/// looking down +z, so a point at depth z has disparity f B / z.
std::vector<CameraCalibration> make_camera_grid(const CameraGridOptions& options);

/// Seeded RGB noise blended with a checkerboard of `checker` texel squares.
Image make_texture(int width, int height, std::uint64_t seed, int checker = 8);

/// Plane scene over a camera grid. Texels are `magnification` view pixels
/// wide at the plane's depth along the central optical axis.
SyntheticScene make_plane_scene(const RefocusPlane& plane, const CameraGridOptions& options,
                                double magnification = 4.0, int texture_size = 256);

/// Ray-traces one camera. Throws PlaneBehindCamera when any pixel ray misses
/// the front of the plane.
Image render_view(const SyntheticScene& scene, const CameraCalibration& cal);

/// Exact disparity of the plane point seen at (u, v) of `view`, measured
/// against the neighbouring camera along s (along t for single-row grids).
double analytic_disparity(const SyntheticScene& scene, ViewIndex view, double u, double v);

/// Renders every view with exact disparity maps.
LightFieldDataset render_scene(const SyntheticScene& scene);

/// Pointwise generalized refocus: for every output pixel and view, intersect
/// the reference ray with the plane, project the hit into the view and
/// sample. Accumulates in double. Contract identical to refocus_generalized.
RefocusImage oracle_refocus(const LightFieldDataset& ds, const Aperture& aperture,
                            const RefocusPlane& plane, const CameraCalibration& ref_cal);

/// PSNR in dB for images in [0, 1] over pixels where `include` holds.
double psnr(const ImageF& a, const ImageF& b, const std::function<bool(int, int)>& include = {});

}  // namespace tiltshift
