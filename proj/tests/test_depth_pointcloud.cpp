#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "knn.hpp"
#include "test_support.hpp"
#include "tiltshift/depth_pointcloud.hpp"
#include "tiltshift/errors.hpp"
#include "tiltshift/synthetic.hpp"

using namespace tiltshift;
using test::Rng;
using test::TempDir;

namespace {

CameraGridOptions grid(int size = 32) {
  CameraGridOptions opt;
  opt.width = size;
  opt.height = size;
  return opt;
}

struct PlyData {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

// Minimal ASCII PLY reader for the writer's own output.
PlyData read_ply(const std::filesystem::path& path) {
  std::ifstream in(path);
  PlyData data;
  std::string line;
  std::size_t count = 0;
  while (std::getline(in, line)) {
    data.header.push_back(line);
    if (line.rfind("element vertex ", 0) == 0) count = std::stoul(line.substr(15));
    if (line == "end_header") break;
  }
  for (std::size_t i = 0; i < count && std::getline(in, line); ++i) {
    std::istringstream fields(line);
    std::vector<double> row;
    double value;
    while (fields >> value) row.push_back(value);
    data.rows.push_back(row);
  }
  return data;
}

}  // namespace

TEST_CASE("disparity_to_depth") {
  CHECK(disparity_to_depth(5.0, 100.0, 0.1) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK_THROWS_AS(disparity_to_depth(0.0, 100.0, 0.1), Error);

  SUBCASE("agrees with projecting a point into two cameras") {
    const auto left = CameraCalibration::from_intrinsics(100, 100, 0, 0);
    const auto right = CameraCalibration::from_intrinsics(100, 100, 0, 0, Mat3::Identity(), Vec3(-0.1, 0, 0));
    const Vec3 X(0.3, -0.2, 2.0);
    const double measured = right.project(X).x() - left.project(X).x();
    CHECK(measured == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(disparity_to_depth(measured, 100.0, 0.1) == doctest::Approx(2.0).epsilon(1e-12));
  }
}

TEST_CASE("reproject_pixel") {
  CHECK(reproject_pixel(Vec2(0, 0), 5.0, CameraCalibration(Mat3::Identity(), Mat3::Identity(), Vec3::Zero())) ==
        Vec3(0, 0, 5));
  const auto cal = CameraCalibration::from_intrinsics(100, 100, 50, 50);
  CHECK((reproject_pixel(Vec2(150, 50), 2.0, cal) - Vec3(2, 0, 2)).norm() < 1e-15);
  CHECK_THROWS_AS(reproject_pixel(Vec2(1, 1), 0.0, cal), Error);
  CHECK_THROWS_AS(reproject_pixel(Vec2(1, 1), -1.0, cal), Error);

  SUBCASE("posed camera round trip") {
    Rng rng(21);
    for (int i = 0; i < 200; ++i) {
      const auto posed = CameraCalibration::from_intrinsics(rng.uniform(50, 400), rng.uniform(50, 400), 32, 24,
                                                            rng.rotation(30), rng.vec(-1, 1));
      const Vec2 uv(rng.uniform(0, 64), rng.uniform(0, 48));
      const double z = rng.uniform(0.5, 10);
      const Vec3 X = reproject_pixel(uv, z, posed);
      CHECK(posed.to_camera(X).z() == doctest::Approx(z).epsilon(1e-12));
      CHECK((posed.project(X) - uv).norm() < 1e-9);
    }
  }
}

TEST_CASE("point cloud of a frontoparallel plane") {
  const LightFieldDataset ds = render_scene(make_plane_scene(RefocusPlane(Vec3(0, 0, 2), Vec3::UnitZ()), grid()));
  const PointCloud cloud = build_point_cloud(ds);
  REQUIRE(cloud.size() == 32u * 32u);
  CHECK(cloud.colors.size() == cloud.size());
  CHECK(cloud.sources.size() == cloud.size());
  CHECK_FALSE(cloud.has_normals());
  REQUIRE(cloud.camera_centers.size() == 1u);
  CHECK(cloud.camera_centers.begin()->first == ViewIndex{1, 1});
  for (const Vec3& p : cloud.points) CHECK(std::abs(p.z() - 2.0) < 1e-6);
  // Colors come from the source pixel.
  const PixelSource& src = cloud.sources[17];
  const Image& view = ds.view(src.view);
  CHECK(cloud.colors[17][1] == view.at(src.u, src.v, 1));

  SUBCASE("stride counts") {
    for (int stride : {1, 2, 3, 5}) {
      const std::size_t side = static_cast<std::size_t>((32 + stride - 1) / stride);
      CHECK(build_point_cloud(ds, {}, stride).size() == side * side);
    }
    CHECK_THROWS_AS(build_point_cloud(ds, {}, 0), Error);
  }

  SUBCASE("budget stride") {
    const int stride = stride_for_budget(ds, {}, 300);
    CHECK(build_point_cloud(ds, {}, stride).size() <= 300u);
    CHECK(build_point_cloud(ds, {}, stride - 1).size() > 300u);
  }

  SUBCASE("multiple views land on the same plane") {
    const std::vector<ViewIndex> views{{0, 0}, {2, 2}, {1, 0}};
    const PointCloud multi = build_point_cloud(ds, views, 4);
    CHECK(multi.size() == 3u * 64u);
    for (const Vec3& p : multi.points) CHECK(std::abs(p.z() - 2.0) < 1e-6);
  }

  SUBCASE("invalid pixels are skipped") {
    std::vector<Image> views;
    std::vector<CameraCalibration> cals;
    std::vector<std::optional<DisparityMap>> disps;
    for (int s = 0; s < 3; ++s) {
      for (int t = 0; t < 3; ++t) {
        views.push_back(ds.view({s, t}));
        cals.push_back(ds.calibration({s, t}));
        disps.push_back(ds.disparity({s, t}));
      }
    }
    disps[4]->invalidate(3, 3);
    disps[4]->invalidate(4, 3);
    const LightFieldDataset holes(3, 3, views, cals, disps);
    CHECK(build_point_cloud(holes).size() == 32u * 32u - 2u);
  }
}

TEST_CASE("depth model needs disparity") {
  const LightFieldDataset ds = render_scene(make_plane_scene(RefocusPlane(Vec3(0, 0, 2), Vec3::UnitZ()), grid(16)));
  std::vector<Image> views;
  std::vector<CameraCalibration> cals;
  for (int s = 0; s < 3; ++s) {
    for (int t = 0; t < 3; ++t) {
      views.push_back(ds.view({s, t}));
      cals.push_back(ds.calibration({s, t}));
    }
  }
  const LightFieldDataset bare(3, 3, views, cals);
  try {
    build_point_cloud(bare);
    FAIL("expected NoDisparity");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoDisparity);
  }
  const DepthModel model(ds, {1, 1});
  CHECK(model.rectified());
  CHECK(model.baseline() == doctest::Approx(0.1));
  CHECK(*model.depth(3, 4) == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("non-rectified arrays triangulate against the neighbour") {
  CameraGridOptions opt = grid(32);
  opt.jitter_deg = 2.0;
  const RefocusPlane truth(Vec3(0.05, 0, 2.2), Vec3(0.3, -0.2, 1));
  const LightFieldDataset ds = render_scene(make_plane_scene(truth, opt));
  const DepthModel model(ds, {1, 1});
  CHECK_FALSE(model.rectified());
  const PointCloud cloud = build_point_cloud(ds);
  REQUIRE(cloud.size() > 900u);
  double worst = 0.0;
  for (const Vec3& p : cloud.points) worst = std::max(worst, std::abs(truth.signed_distance(p)));
  CHECK(worst < 1e-6);
}

TEST_CASE("normal estimation") {
  SUBCASE("frontoparallel plane faces the camera") {
    const LightFieldDataset ds =
        render_scene(make_plane_scene(RefocusPlane(Vec3(0, 0, 2), Vec3::UnitZ()), grid()));
    const NormalEstimate est = estimate_normals(build_point_cloud(ds), 8);
    REQUIRE(est.cloud.has_normals());
    REQUIRE(est.normal_map.has_value());
    double worst = 0.0;
    for (const Vec3& n : est.cloud.normals) {
      CHECK(n.norm() == doctest::Approx(1.0).epsilon(1e-9));
      worst = std::max(worst, test::angle_deg(n, Vec3(0, 0, -1)));
    }
    CHECK(worst < 2.0);
    CHECK(est.normal_map->valid(5, 5));
    CHECK(test::angle_deg(est.normal_map->at(5, 5), Vec3(0, 0, -1)) < 2.0);
  }

  SUBCASE("tilted plane x + z = 3") {
    const LightFieldDataset ds =
        render_scene(make_plane_scene(RefocusPlane(Vec3(0, 0, 3), Vec3(1, 0, 1)), grid()));
    const NormalEstimate est = estimate_normals(build_point_cloud(ds), 8);
    const Vec3 expected = -Vec3(1, 0, 1).normalized();
    double sum = 0.0;
    for (const Vec3& n : est.cloud.normals) sum += test::angle_deg(n, expected);
    CHECK(sum / static_cast<double>(est.cloud.size()) < 2.0);
  }

  SUBCASE("errors") {
    PointCloud tiny;
    tiny.points = {Vec3(0, 0, 1), Vec3(1, 0, 1), Vec3(0, 1, 1)};
    tiny.colors.resize(3);
    tiny.sources.resize(3);
    try {
      estimate_normals(tiny, 8);
      FAIL("expected TooFewPoints");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::TooFewPoints);
    }
    CHECK_THROWS_AS(estimate_normals(tiny, 1), Error);
  }

  SUBCASE("multi-view clouds have no raster") {
    const LightFieldDataset ds =
        render_scene(make_plane_scene(RefocusPlane(Vec3(0, 0, 2), Vec3::UnitZ()), grid(16)));
    const std::vector<ViewIndex> views{{0, 0}, {1, 1}};
    CHECK_FALSE(estimate_normals(build_point_cloud(ds, views), 8).normal_map.has_value());
  }
}

TEST_CASE("neighbour index grid path matches brute force") {
  Rng rng(31);
  std::vector<Vec3> points;
  for (int i = 0; i < 22000; ++i) points.push_back(Vec3(rng.uniform(0, 4), rng.uniform(0, 4), rng.uniform(0, 0.2)));
  const detail::NeighborIndex index(points);
  REQUIRE(index.uses_grid());
  for (int q = 0; q < 22000; q += 997) {
    std::vector<std::pair<double, int>> all;
    for (int i = 0; i < 22000; ++i) {
      if (i != q) all.emplace_back((points[i] - points[q]).squaredNorm(), i);
    }
    std::partial_sort(all.begin(), all.begin() + 8, all.end());
    const std::vector<int> got = index.nearest(q, 8);
    REQUIRE(got.size() == 8u);
    for (int j = 0; j < 8; ++j) CHECK(got[j] == all[j].second);
  }
}

TEST_CASE("PLY export") {
  TempDir dir("ply");
  PointCloud cloud;
  cloud.points = {Vec3(0.1, 0.2, 2.0), Vec3(-1.0 / 3.0, 1e-4, 2.5), Vec3(7, 8, 9)};
  cloud.colors = {Rgb{1, 2, 3}, Rgb{255, 0, 128}, Rgb{9, 9, 9}};
  cloud.sources.resize(3);

  const std::string header = ply_header(cloud);
  CHECK(header.find("element vertex 3\n") != std::string::npos);
  CHECK(header.find("property float nx") == std::string::npos);
  CHECK(header.rfind("ply\nformat ascii 1.0\n", 0) == 0);

  export_ply(cloud, dir / "a.ply");
  const PlyData plain = read_ply(dir / "a.ply");
  REQUIRE(plain.rows.size() == 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    REQUIRE(plain.rows[i].size() == 6u);
    for (int c = 0; c < 3; ++c) {
      CHECK(static_cast<float>(plain.rows[i][c]) == static_cast<float>(cloud.points[i][c]));
      CHECK(plain.rows[i][3 + c] == cloud.colors[i][c]);
    }
  }

  cloud.normals = {Vec3(0, 0, -1), Vec3(0, 1, 0), Vec3(1, 0, 0)};
  CHECK(ply_header(cloud).find("property float nx\nproperty float ny\nproperty float nz\n") != std::string::npos);
  export_ply(cloud, dir / "n.ply");
  const PlyData with_normals = read_ply(dir / "n.ply");
  REQUIRE(with_normals.rows.size() == 3u);
  CHECK(with_normals.rows[0].size() == 9u);
  CHECK(with_normals.rows[0][8] == -1.0);

  CHECK_THROWS_AS(export_ply(cloud, "/nonexistent_tiltshift_dir/x.ply"), Error);
}
