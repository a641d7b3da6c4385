#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "tiltshift/geometry.hpp"
#include "tiltshift/image.hpp"
#include "tiltshift/lightfield_io.hpp"

namespace tiltshift {

using Rgb = std::array<std::uint8_t, 3>;

/// Where a cloud point came from: view (s, t), pixel (u, v).
struct PixelSource {
  ViewIndex view;
  int u = 0;
  int v = 0;
};

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Rgb> colors;
  std::vector<Vec3> normals;  // empty until estimate_normals
  std::vector<PixelSource> sources;
  std::map<ViewIndex, Vec3> camera_centers;
  int view_width = 0;
  int view_height = 0;

  std::size_t size() const { return points.size(); }
  bool has_normals() const { return !normals.empty(); }
};

/// Per-pixel unit normals of one view; invalid pixels hold NaN.
class NormalMap {
 public:
  NormalMap() = default;
  NormalMap(int width, int height);

  int width() const { return normals_.width(); }
  int height() const { return normals_.height(); }
  bool valid(int u, int v) const;
  Vec3 at(int u, int v) const;
  void set(int u, int v, const Vec3& n);

 private:
  ImageF normals_;
};

/// z = f B / disp. Throws ZeroDisparity when |disp| < 1e-9.
double disparity_to_depth(double disparity, double focal, double baseline);

/// World point z K^-1 (u, v, 1) mapped through the camera pose.
/// Throws NonPositiveDepth when z <= 0.
Vec3 reproject_pixel(const Vec2& uv, double z, const CameraCalibration& cal);

/// Converts a view's disparity into metric depth. Rectified neighbours use
/// z = f B / disp; anything else finds the depth at which the neighbouring
/// view sees the point displaced by the disparity along the baseline axis.
class DepthModel {
 public:
  /// Throws NoDisparity if the view has no disparity map or no neighbour.
  DepthModel(const LightFieldDataset& ds, ViewIndex view);

  /// Camera-frame depth at an integer pixel, or nullopt where the disparity
  /// is invalid or yields a point at or behind the camera.
  std::optional<double> depth(int u, int v) const;
  std::optional<Vec3> point(int u, int v) const;

  bool rectified() const { return rectified_; }
  double baseline() const { return baseline_; }

 private:
  const DisparityMap* disparity_;
  const CameraCalibration* cal_;
  const CameraCalibration* neighbour_;
  int step_s_ = 0;
  int step_t_ = 0;
  bool rectified_ = false;
  double focal_ = 0.0;
  double baseline_ = 0.0;
};

/// One point per valid pixel on a stride x stride lattice of each view.
/// An empty selection means the grid center view only.
PointCloud build_point_cloud(const LightFieldDataset& ds, std::span<const ViewIndex> views = {},
                             int stride = 1);

/// Smallest stride whose cloud has at most `max_points` points.
int stride_for_budget(const LightFieldDataset& ds, std::span<const ViewIndex> views,
                      std::size_t max_points);

struct NormalEstimate {
  PointCloud cloud;
  /// Present when the cloud was built from a single view.
  std::optional<NormalMap> normal_map;
};

/// PCA plane fit over each point and its k nearest neighbours. Normals face
/// the source camera. Throws TooFewPoints when the cloud has fewer than k+1 points.
NormalEstimate estimate_normals(PointCloud cloud, int k = 8);

/// ASCII PLY: x y z red green blue [nx ny nz].
void export_ply(const PointCloud& cloud, const std::filesystem::path& path);
std::string ply_header(const PointCloud& cloud);

}  // namespace tiltshift
