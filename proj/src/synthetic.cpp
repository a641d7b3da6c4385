#include "tiltshift/synthetic.hpp"

#include <Eigen/Geometry>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "tiltshift/errors.hpp"
#include "tiltshift/parallel.hpp"

namespace tiltshift {

namespace {

int wrap(int i, int n) {
  const int r = i % n;
  return r < 0 ? r + n : r;
}

// Bilinear texture lookup with wrap-around, in [0, 255].
void sample_texture(const Image& tex, double a, double b, double out[3]) {
  const double fa = std::floor(a);
  const double fb = std::floor(b);
  const double wa = a - fa;
  const double wb = b - fb;
  const int a0 = static_cast<int>(std::fmod(fa, tex.width()));
  const int b0 = static_cast<int>(std::fmod(fb, tex.height()));
  const int xs[2] = {wrap(a0, tex.width()), wrap(a0 + 1, tex.width())};
  const int ys[2] = {wrap(b0, tex.height()), wrap(b0 + 1, tex.height())};
  const double w[4] = {(1 - wa) * (1 - wb), wa * (1 - wb), (1 - wa) * wb, wa * wb};
  for (int c = 0; c < 3; ++c) {
    out[c] = w[0] * tex.at(xs[0], ys[0], c) + w[1] * tex.at(xs[1], ys[0], c) +
             w[2] * tex.at(xs[0], ys[1], c) + w[3] * tex.at(xs[1], ys[1], c);
  }
}

// Ray parameter of the plane hit along world direction `dir` from `origin`.
double hit_parameter(const RefocusPlane& plane, const Vec3& origin, const Vec3& dir) {
  const double denom = plane.normal().dot(dir);
  if (denom == 0.0) return std::numeric_limits<double>::infinity();
  return (plane.point() - origin).dot(plane.normal()) / denom;
}

Vec3 pixel_ray(const CameraCalibration& cal, double u, double v) {
  return cal.R().transpose() * (cal.K_inv() * Vec3(u, v, 1.0));
}

struct OracleSample {
  double rgb[3] = {0.0, 0.0, 0.0};
  double mask = 0.0;
};

// Kept separate from the engine's sampler so the oracle stays independent.
OracleSample oracle_bilinear(const Image& img, double x, double y) {
  OracleSample out;
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const double ax = x - x0;
  const double ay = y - y0;
  const int tx[4] = {x0, x0 + 1, x0, x0 + 1};
  const int ty[4] = {y0, y0, y0 + 1, y0 + 1};
  const double tw[4] = {(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay, ax * ay};
  for (int k = 0; k < 4; ++k) {
    if (tw[k] == 0.0 || !img.contains(tx[k], ty[k])) continue;
    for (int c = 0; c < 3; ++c) out.rgb[c] += tw[k] * img.at(tx[k], ty[k], c) / 255.0;
    out.mask += tw[k];
  }
  if (out.mask > 0.0) {
    for (double& c : out.rgb) c /= out.mask;
  }
  return out;
}

}  // namespace

TextureFrame TextureFrame::on_plane(const RefocusPlane& plane, double texel_size) {
  const Vec3& n = plane.normal();
  Vec3 u = Vec3::UnitX() - Vec3::UnitX().dot(n) * n;
  if (u.norm() < 1e-6) u = Vec3::UnitY() - Vec3::UnitY().dot(n) * n;
  u.normalize();
  return {plane.point(), u, n.cross(u).normalized(), texel_size};
}

std::vector<CameraCalibration> make_camera_grid(const CameraGridOptions& o) {
  if (o.rows <= 0 || o.cols <= 0 || o.width <= 0 || o.height <= 0 || !(o.focal > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "camera grid needs positive dimensions and focal");
  }
  std::mt19937_64 rng(o.seed);
  const auto unit = [&rng] { return static_cast<double>(rng() >> 11) * 0x1.0p-53 * 2.0 - 1.0; };
  const double sc = 0.5 * (o.rows - 1);
  const double tc = 0.5 * (o.cols - 1);
  const double cx = 0.5 * (o.width - 1);
  const double cy = 0.5 * (o.height - 1);
  std::vector<CameraCalibration> cams;
  for (int s = 0; s < o.rows; ++s) {
    for (int t = 0; t < o.cols; ++t) {
      Mat3 R = Mat3::Identity();
      if (o.jitter_deg > 0.0) {
        const Vec3 axis = Vec3(unit(), unit(), unit()).normalized();
        const double angle = o.jitter_deg * unit() * std::numbers::pi / 180.0;
        R = Eigen::AngleAxisd(angle, axis).toRotationMatrix();
      }
      const Vec3 center((sc - s) * o.baseline, (tc - t) * o.baseline, 0.0);
      cams.push_back(CameraCalibration::from_intrinsics(o.focal, o.focal, cx, cy, R, center));
    }
  }
  return cams;
}

Image make_texture(int width, int height, std::uint64_t seed, int checker) {
  std::mt19937_64 rng(seed);
  Image tex(width, height);
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      const bool dark = ((u / checker) + (v / checker)) % 2 == 0;
      for (int c = 0; c < 3; ++c) {
        const double noise = static_cast<double>(rng() >> 56);
        tex.at(u, v, c) = static_cast<std::uint8_t>(std::lround(0.65 * noise + (dark ? 20.0 : 80.0)));
      }
    }
  }
  return tex;
}

SyntheticScene make_plane_scene(const RefocusPlane& plane, const CameraGridOptions& options,
                                double magnification, int texture_size) {
  SyntheticScene scene;
  scene.plane = plane;
  scene.grid_rows = options.rows;
  scene.grid_cols = options.cols;
  scene.width = options.width;
  scene.height = options.height;
  scene.cameras = make_camera_grid(options);
  scene.texture = make_texture(texture_size, texture_size, options.seed);

  const CameraCalibration& center = scene.camera({(options.rows - 1) / 2, (options.cols - 1) / 2});
  const double lambda = hit_parameter(plane, center.center(), center.optical_axis());
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw Error(ErrorCode::PlaneBehindCamera, "central camera does not face the plane");
  }
  scene.frame = TextureFrame::on_plane(plane, magnification * lambda / options.focal);
  return scene;
}

Image render_view(const SyntheticScene& scene, const CameraCalibration& cal) {
  Image img(scene.width, scene.height);
  const Vec3 half(0.5 * scene.texture.width(), 0.5 * scene.texture.height(), 0.0);
  parallel_for(0, scene.height, [&](int v) {
    for (int u = 0; u < scene.width; ++u) {
      const Vec3 dir = pixel_ray(cal, u, v);
      const double lambda = hit_parameter(scene.plane, cal.center(), dir);
      if (!(lambda > 0.0) || !std::isfinite(lambda)) {
        throw Error(ErrorCode::PlaneBehindCamera, "camera ray misses the front of the plane");
      }
      const Vec3 rel = cal.center() + lambda * dir - scene.frame.origin;
      const double a = rel.dot(scene.frame.axis_u) / scene.frame.texel_size + half.x();
      const double b = rel.dot(scene.frame.axis_v) / scene.frame.texel_size + half.y();
      double rgb[3];
      sample_texture(scene.texture, a, b, rgb);
      for (int c = 0; c < 3; ++c) img.at(u, v, c) = static_cast<std::uint8_t>(std::lround(rgb[c]));
    }
  });
  return img;
}

double analytic_disparity(const SyntheticScene& scene, ViewIndex view, double u, double v) {
  const CameraCalibration& cal = scene.camera(view);
  ViewIndex nb = view;
  int step = 0;
  bool along_s = scene.grid_rows > 1;
  if (along_s) {
    step = view.s + 1 < scene.grid_rows ? 1 : -1;
    nb.s += step;
  } else {
    step = view.t + 1 < scene.grid_cols ? 1 : -1;
    nb.t += step;
  }
  const Vec3 dir = pixel_ray(cal, u, v);
  const Vec3 hit = cal.center() + hit_parameter(scene.plane, cal.center(), dir) * dir;
  const Vec2 moved = scene.camera(nb).project(hit);
  return (along_s ? moved.x() - u : moved.y() - v) / step;
}

LightFieldDataset render_scene(const SyntheticScene& scene) {
  if (scene.grid_rows * scene.grid_cols < 2) {
    throw Error(ErrorCode::InvalidArgument, "synthetic scenes need at least two views");
  }
  std::vector<Image> views;
  std::vector<std::optional<DisparityMap>> disparities;
  for (int s = 0; s < scene.grid_rows; ++s) {
    for (int t = 0; t < scene.grid_cols; ++t) {
      const ViewIndex idx{s, t};
      views.push_back(render_view(scene, scene.camera(idx)));
      DisparityMap disp(scene.width, scene.height);
      parallel_for(0, scene.height, [&](int v) {
        for (int u = 0; u < scene.width; ++u) {
          disp.set(u, v, static_cast<float>(analytic_disparity(scene, idx, u, v)));
        }
      });
      disparities.emplace_back(std::move(disp));
    }
  }
  nlohmann::json meta = {{"name", "synthetic plane"},
                         {"units", "meters"},
                         {"plane_point", {scene.plane.point().x(), scene.plane.point().y(), scene.plane.point().z()}},
                         {"plane_normal", {scene.plane.normal().x(), scene.plane.normal().y(), scene.plane.normal().z()}}};
  return {scene.grid_rows, scene.grid_cols, std::move(views), scene.cameras, std::move(disparities),
          std::move(meta)};
}

RefocusImage oracle_refocus(const LightFieldDataset& ds, const Aperture& aperture,
                            const RefocusPlane& plane, const CameraCalibration& ref_cal) {
  if (aperture.entries.empty()) throw Error(ErrorCode::EmptyAperture, "aperture has no views");
  if (std::abs((plane.point() - ref_cal.center()).dot(plane.normal())) < kPlaneEpsilon) {
    throw Error(ErrorCode::DegeneratePlane, "refocus plane passes through the reference camera");
  }
  const int w = ds.width();
  const int h = ds.height();
  RefocusImage out{ImageF(w, h), FloatMap(w, h)};
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const Vec3 dir = ref_cal.R().transpose() * (ref_cal.K_inv() * Vec3(u, v, 1.0));
      const double lambda = hit_parameter(plane, ref_cal.center(), dir);
      double num[3] = {0.0, 0.0, 0.0};
      double den = 0.0;
      for (const auto& entry : aperture.entries) {
        const CameraCalibration& cal = ds.calibration(entry.view);
        const Vec3 hit = ref_cal.center() + lambda * dir;
        const Vec3 cam = cal.to_camera(hit);
        // Same acceptance rule as the homography path: w = z_target / lambda.
        if (!(cam.z() / lambda > 1e-12)) continue;
        const Vec3 px = cal.K() * cam;
        const OracleSample s = oracle_bilinear(ds.view(entry.view), px.x() / px.z(), px.y() / px.z());
        if (s.mask <= 0.0) continue;
        for (int c = 0; c < 3; ++c) num[c] += entry.weight * s.mask * s.rgb[c];
        den += entry.weight * s.mask;
      }
      out.coverage.at(u, v) = static_cast<float>(den);
      for (int c = 0; c < 3; ++c) out.image.at(u, v, c) = den > 0.0 ? static_cast<float>(num[c] / den) : 0.0f;
    }
  }
  return out;
}

double psnr(const ImageF& a, const ImageF& b, const std::function<bool(int, int)>& include) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw Error(ErrorCode::DimensionMismatch, "PSNR needs equally sized images");
  }
  double sse = 0.0;
  std::size_t n = 0;
  for (int v = 0; v < a.height(); ++v) {
    for (int u = 0; u < a.width(); ++u) {
      if (include && !include(u, v)) continue;
      for (int c = 0; c < 3; ++c) {
        const double d = static_cast<double>(a.at(u, v, c)) - b.at(u, v, c);
        sse += d * d;
      }
      n += 3;
    }
  }
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "PSNR over an empty pixel set");
  const double mse = sse / static_cast<double>(n);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

}  // namespace tiltshift
