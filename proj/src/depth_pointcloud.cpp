#include "tiltshift/depth_pointcloud.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "knn.hpp"
#include "tiltshift/errors.hpp"
#include "tiltshift/parallel.hpp"

namespace tiltshift {

namespace {

constexpr double kMinDisparity = 1e-9;

bool nearly_equal(const Mat3& a, const Mat3& b) {
  return (a - b).cwiseAbs().maxCoeff() <= 1e-9 * std::max(1.0, a.cwiseAbs().maxCoeff());
}

std::vector<ViewIndex> resolve_views(const LightFieldDataset& ds, std::span<const ViewIndex> views) {
  if (views.empty()) return {ds.center()};
  return {views.begin(), views.end()};
}

}  // namespace

NormalMap::NormalMap(int width, int height)
    : normals_(width, height, std::numeric_limits<float>::quiet_NaN()) {}

bool NormalMap::valid(int u, int v) const {
  return normals_.contains(u, v) && std::isfinite(normals_.at(u, v, 0));
}

Vec3 NormalMap::at(int u, int v) const {
  const float* n = normals_.pixel(u, v);
  return Vec3(n[0], n[1], n[2]).normalized();
}

void NormalMap::set(int u, int v, const Vec3& n) {
  float* dst = normals_.pixel(u, v);
  for (int c = 0; c < 3; ++c) dst[c] = static_cast<float>(n[c]);
}

double disparity_to_depth(double disparity, double focal, double baseline) {
  if (!std::isfinite(disparity) || std::abs(disparity) < kMinDisparity) {
    throw Error(ErrorCode::ZeroDisparity, "disparity is zero: point at infinity");
  }
  return focal * baseline / disparity;
}

Vec3 reproject_pixel(const Vec2& uv, double z, const CameraCalibration& cal) {
  if (!(z > 0.0)) throw Error(ErrorCode::NonPositiveDepth, "depth must be positive");
  const Vec3 camera = z * (cal.K_inv() * Vec3(uv.x(), uv.y(), 1.0));
  return cal.to_world(camera);
}

DepthModel::DepthModel(const LightFieldDataset& ds, ViewIndex view) {
  const auto& disp = ds.disparity(view);
  if (!disp) throw Error(ErrorCode::NoDisparity, "view has no disparity map");
  disparity_ = &*disp;
  cal_ = &ds.calibration(view);

  // Disparity is measured along s when the grid has several rows, else along t.
  ViewIndex nb = view;
  if (ds.grid_rows() > 1) {
    step_s_ = view.s + 1 < ds.grid_rows() ? 1 : -1;
    nb.s += step_s_;
  } else if (ds.grid_cols() > 1) {
    step_t_ = view.t + 1 < ds.grid_cols() ? 1 : -1;
    nb.t += step_t_;
  } else {
    throw Error(ErrorCode::NoDisparity, "a single-view dataset has no baseline");
  }
  neighbour_ = &ds.calibration(nb);

  const Vec3 offset = cal_->R() * (neighbour_->center() - cal_->center());
  const int axis = step_s_ != 0 ? 0 : 1;
  const double along = offset[axis];
  const double across = std::hypot(offset[1 - axis], offset.z());
  rectified_ = nearly_equal(cal_->K(), neighbour_->K()) && nearly_equal(cal_->R(), neighbour_->R()) &&
               std::abs(along) > 0.0 && across <= 1e-9 * std::abs(along);
  focal_ = cal_->K()(axis, axis);
  baseline_ = -along / (step_s_ != 0 ? step_s_ : step_t_);
}

std::optional<double> DepthModel::depth(int u, int v) const {
  if (!disparity_->valid(u, v)) return std::nullopt;
  const double disp = disparity_->at(u, v);
  if (std::abs(disp) < kMinDisparity) return std::nullopt;

  if (rectified_) {
    const double z = disparity_to_depth(disp, focal_, baseline_);
    if (!(z > 0.0)) return std::nullopt;
    return z;
  }

  // Depth along the pixel ray at which the neighbour sees the point displaced
  // by the disparity along the baseline axis: linear in z.
  const int axis = step_s_ != 0 ? 0 : 1;
  const double target = (axis == 0 ? u : v) + (step_s_ + step_t_) * disp;
  const Mat3 M = neighbour_->K() * neighbour_->R();
  const Vec3 a = M * (cal_->center() - neighbour_->center());
  const Vec3 b = M * (cal_->R().transpose() * (cal_->K_inv() * Vec3(u, v, 1.0)));
  const double denom = b[axis] - target * b.z();
  if (std::abs(denom) < 1e-12 * b.norm()) return std::nullopt;
  const double z = (target * a.z() - a[axis]) / denom;
  if (!(z > 0.0) || !std::isfinite(z)) return std::nullopt;
  return z;
}

std::optional<Vec3> DepthModel::point(int u, int v) const {
  const auto z = depth(u, v);
  if (!z) return std::nullopt;
  return reproject_pixel(Vec2(u, v), *z, *cal_);
}

PointCloud build_point_cloud(const LightFieldDataset& ds, std::span<const ViewIndex> views,
                             int stride) {
  if (stride < 1) throw Error(ErrorCode::InvalidArgument, "stride must be >= 1");
  PointCloud cloud;
  cloud.view_width = ds.width();
  cloud.view_height = ds.height();
  for (const ViewIndex view : resolve_views(ds, views)) {
    if (!ds.contains(view)) throw Error(ErrorCode::OutOfRange, "view outside the grid");
    const DepthModel model(ds, view);
    const Image& img = ds.view(view);
    cloud.camera_centers[view] = ds.calibration(view).center();
    for (int v = 0; v < ds.height(); v += stride) {
      for (int u = 0; u < ds.width(); u += stride) {
        const auto point = model.point(u, v);
        if (!point) continue;
        const std::uint8_t* px = img.pixel(u, v);
        cloud.points.push_back(*point);
        cloud.colors.push_back({px[0], px[1], px[2]});
        cloud.sources.push_back({view, u, v});
      }
    }
  }
  return cloud;
}

int stride_for_budget(const LightFieldDataset& ds, std::span<const ViewIndex> views,
                      std::size_t max_points) {
  const auto selected = resolve_views(ds, views);
  std::vector<const DisparityMap*> maps;
  for (const ViewIndex view : selected) {
    const auto& disp = ds.disparity(view);
    if (!disp) throw Error(ErrorCode::NoDisparity, "view has no disparity map");
    maps.push_back(&*disp);
  }
  const int largest = std::max(ds.width(), ds.height());
  for (int stride = 1; stride < largest; ++stride) {
    std::size_t count = 0;
    for (const auto* map : maps) {
      for (int v = 0; v < ds.height(); v += stride) {
        for (int u = 0; u < ds.width(); u += stride) count += map->valid(u, v) ? 1 : 0;
      }
    }
    if (count <= max_points) return stride;
  }
  return largest;
}

NormalEstimate estimate_normals(PointCloud cloud, int k) {
  if (k < 2) throw Error(ErrorCode::InvalidArgument, "need at least 2 neighbours for a plane fit");
  const auto n = cloud.points.size();
  if (n < static_cast<std::size_t>(k) + 1) {
    throw Error(ErrorCode::TooFewPoints, "cloud has " + std::to_string(n) + " points, need " +
                                             std::to_string(k + 1));
  }

  const detail::NeighborIndex index(cloud.points);
  cloud.normals.assign(n, Vec3::Zero());
  parallel_for(0, static_cast<int>(n), [&](int i) {
    const auto neighbours = index.nearest(i, k);
    Vec3 mean = cloud.points[i];
    for (int j : neighbours) mean += cloud.points[j];
    mean /= static_cast<double>(neighbours.size() + 1);
    Mat3 cov = (cloud.points[i] - mean) * (cloud.points[i] - mean).transpose();
    for (int j : neighbours) cov += (cloud.points[j] - mean) * (cloud.points[j] - mean).transpose();

    const Eigen::SelfAdjointEigenSolver<Mat3> solver(cov);
    Vec3 normal = solver.eigenvectors().col(0).normalized();
    Vec3 viewpoint = Vec3::Zero();
    if (i < static_cast<int>(cloud.sources.size())) {
      const auto it = cloud.camera_centers.find(cloud.sources[i].view);
      if (it != cloud.camera_centers.end()) viewpoint = it->second;
    }
    if (normal.dot(viewpoint - cloud.points[i]) < 0.0) normal = -normal;
    cloud.normals[i] = normal;
  });

  NormalEstimate result;
  if (cloud.camera_centers.size() == 1 && cloud.sources.size() == n && cloud.view_width > 0) {
    NormalMap map(cloud.view_width, cloud.view_height);
    for (std::size_t i = 0; i < n; ++i) map.set(cloud.sources[i].u, cloud.sources[i].v, cloud.normals[i]);
    result.normal_map = std::move(map);
  }
  result.cloud = std::move(cloud);
  return result;
}

std::string ply_header(const PointCloud& cloud) {
  std::ostringstream out;
  out << "ply\n"
      << "format ascii 1.0\n"
      << "comment tiltshift point cloud\n"
      << "element vertex " << cloud.size() << "\n"
      << "property float x\n"
      << "property float y\n"
      << "property float z\n"
      << "property uchar red\n"
      << "property uchar green\n"
      << "property uchar blue\n";
  if (cloud.has_normals()) {
    out << "property float nx\n"
        << "property float ny\n"
        << "property float nz\n";
  }
  out << "end_header\n";
  return out.str();
}

void export_ply(const PointCloud& cloud, const std::filesystem::path& path) {
  if (cloud.colors.size() != cloud.size() || (cloud.has_normals() && cloud.normals.size() != cloud.size())) {
    throw Error(ErrorCode::InvalidArgument, "point cloud attribute lists differ in length");
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
  out << ply_header(cloud);
  out.precision(std::numeric_limits<float>::max_digits10);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.points[i];
    const Rgb& c = cloud.colors[i];
    out << static_cast<float>(p.x()) << ' ' << static_cast<float>(p.y()) << ' '
        << static_cast<float>(p.z()) << ' ' << int(c[0]) << ' ' << int(c[1]) << ' ' << int(c[2]);
    if (cloud.has_normals()) {
      const Vec3& nrm = cloud.normals[i];
      out << ' ' << static_cast<float>(nrm.x()) << ' ' << static_cast<float>(nrm.y()) << ' '
          << static_cast<float>(nrm.z());
    }
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::IoFailure, "short write to " + path.string());
}

}  // namespace tiltshift
