// tiltshift: batch access to the refocus engine.
//
//   tiltshift refocus    --lf DIR --out o.png (--disparity D | --plane px,py,pz:nx,ny,nz
//                                              | --click u,v | --manual z,rx,ry)
//   tiltshift pointcloud --lf DIR --out cloud.ply [--stride N] [--normals K]
//   tiltshift synth      --out DIR [--tilt-y DEG] [--seed N] ...
//   tiltshift verify     [--lf DIR]
//   tiltshift serve      [--host H] [--port P]
//
// Exit codes: 0 success, 1 engine or data error, 2 usage error.

#include <CLI11.hpp>
#include <Eigen/Geometry>
#include <cmath>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tiltshift/depth_pointcloud.hpp"
#include "tiltshift/errors.hpp"
#include "tiltshift/lightfield_io.hpp"
#include "tiltshift/parallel.hpp"
#include "tiltshift/plane_interaction.hpp"
#include "tiltshift/refocus.hpp"
#include "tiltshift/service.hpp"
#include "tiltshift/synthetic.hpp"
#include "tiltshift/verify.hpp"

namespace ts = tiltshift;

namespace {

constexpr int kExitEngine = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<double> parse_numbers(const std::string& text, std::size_t count, const std::string& flag) {
  std::vector<double> values;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError(flag + ": '" + item + "' is not a number");
    }
  }
  if (values.size() != count) {
    throw UsageError(flag + " expects " + std::to_string(count) + " comma-separated values");
  }
  return values;
}

ts::RefocusPlane parse_plane(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw UsageError("--plane expects px,py,pz:nx,ny,nz");
  const auto p = parse_numbers(text.substr(0, colon), 3, "--plane");
  const auto n = parse_numbers(text.substr(colon + 1), 3, "--plane");
  if (n[0] == 0.0 && n[1] == 0.0 && n[2] == 0.0) throw UsageError("--plane normal must be non-zero");
  return {ts::Vec3(p[0], p[1], p[2]), ts::Vec3(n[0], n[1], n[2])};
}

ts::ApertureProfile parse_profile(const std::string& name) {
  return name == "gaussian" ? ts::ApertureProfile::Gaussian : ts::ApertureProfile::Uniform;
}

struct RefocusArgs {
  std::string lf;
  std::string out;
  std::string out_float;
  std::optional<double> disparity;
  std::string plane;
  std::string click;
  std::string manual;
  std::string reference;
  double radius = 0.0;
  std::string profile = "uniform";
};

int run_refocus(const RefocusArgs& args) {
  const int chosen = (args.disparity ? 1 : 0) + !args.plane.empty() + !args.click.empty() + !args.manual.empty();
  if (chosen != 1) {
    throw UsageError("give exactly one of --disparity, --plane, --click, --manual");
  }
  const ts::LightFieldDataset ds = ts::load_dataset(args.lf);
  ts::AngularPosition reference{0.5 * (ds.grid_rows() - 1), 0.5 * (ds.grid_cols() - 1)};
  if (!args.reference.empty()) {
    const auto st = parse_numbers(args.reference, 2, "--reference");
    reference = {st[0], st[1]};
  }
  const double radius = args.radius > 0.0 ? args.radius : std::hypot(0.5 * (ds.grid_rows() - 1), 0.5 * (ds.grid_cols() - 1)) + 1e-9;
  const double effective_radius = radius > 1e-9 ? radius : 0.5;

  std::optional<ts::FocusTarget> target;
  if (args.disparity) {
    target = *args.disparity;
  } else if (!args.plane.empty()) {
    target = parse_plane(args.plane);
  } else if (!args.manual.empty()) {
    const auto m = parse_numbers(args.manual, 3, "--manual");
    target = ts::plane_from_manual({m[0], m[1], m[2], 0.0}, ts::virtual_calibration(ds, reference));
  } else {
    const auto uv = parse_numbers(args.click, 2, "--click");
    const ts::ViewIndex view{static_cast<int>(std::lround(reference.s)), static_cast<int>(std::lround(reference.t))};
    const ts::ViewIndex views[] = {view};
    const auto normals = ts::estimate_normals(ts::build_point_cloud(ds, views, 1), 8);
    target = ts::plane_from_click(ds, view, ts::Vec2(uv[0], uv[1]), *normals.normal_map);
  }
  if (const auto* plane = std::get_if<ts::RefocusPlane>(&*target)) {
    const auto& p = plane->point();
    const auto& n = plane->normal();
    std::cout << "plane p=(" << p.x() << "," << p.y() << "," << p.z() << ") n=(" << n.x() << ","
              << n.y() << "," << n.z() << ")\n";
  }

  const ts::RefocusImage image = ts::refocus_at_virtual_view(ds, reference, effective_radius, *target,
                                                             parse_profile(args.profile));
  ts::save_image(ts::to_8bit(image.image), args.out);
  if (!args.out_float.empty()) ts::save_pfm(image.image, args.out_float);
  std::cout << "covered_fraction " << image.covered_fraction() << "\n";
  return 0;
}

struct PointcloudArgs {
  std::string lf;
  std::string out;
  int stride = 0;
  int normals = 8;
  bool all_views = false;
};

int run_pointcloud(const PointcloudArgs& args) {
  const ts::LightFieldDataset ds = ts::load_dataset(args.lf);
  std::vector<ts::ViewIndex> views;
  if (args.all_views) {
    for (int s = 0; s < ds.grid_rows(); ++s) {
      for (int t = 0; t < ds.grid_cols(); ++t) views.push_back({s, t});
    }
  }
  const int stride = args.stride > 0 ? args.stride : ts::stride_for_budget(ds, views, 300000);
  ts::PointCloud cloud = ts::build_point_cloud(ds, views, stride);
  if (args.normals > 0) cloud = ts::estimate_normals(std::move(cloud), args.normals).cloud;
  ts::export_ply(cloud, args.out);
  std::cout << "points " << cloud.size() << " stride " << stride << "\n";
  return 0;
}

struct SynthArgs {
  std::string out;
  int rows = 3;
  int cols = 3;
  int width = 64;
  int height = 64;
  double focal = 100.0;
  double baseline = 0.1;
  double depth = 2.0;
  double tilt_x = 0.0;
  double tilt_y = 0.0;
  double jitter = 0.0;
  double magnification = 4.0;
  std::uint64_t seed = 1;
};

int run_synth(const SynthArgs& args) {
  if (args.width <= 0 || args.height <= 0 || args.rows <= 0 || args.cols <= 0) {
    throw UsageError("image and grid sizes must be positive");
  }
  if (std::abs(args.tilt_x) >= 90.0 || std::abs(args.tilt_y) >= 90.0) {
    throw UsageError("tilts must lie strictly between -90 and 90 degrees");
  }
  constexpr double kDeg = std::numbers::pi / 180.0;
  const ts::Vec3 normal = Eigen::AngleAxisd(args.tilt_x * kDeg, ts::Vec3::UnitX()) *
                          (Eigen::AngleAxisd(args.tilt_y * kDeg, ts::Vec3::UnitY()) * ts::Vec3::UnitZ());
  ts::CameraGridOptions grid;
  grid.rows = args.rows;
  grid.cols = args.cols;
  grid.width = args.width;
  grid.height = args.height;
  grid.focal = args.focal;
  grid.baseline = args.baseline;
  grid.jitter_deg = args.jitter;
  grid.seed = args.seed;
  const auto scene = ts::make_plane_scene(ts::RefocusPlane(ts::Vec3(0.0, 0.0, args.depth), normal), grid,
                                          args.magnification);
  ts::write_dataset(ts::render_scene(scene), args.out);
  std::cout << "wrote " << args.rows * args.cols << " views to " << args.out << "\n";
  return 0;
}

struct VerifyArgs {
  std::string lf;
  int configs = 20;
  std::uint64_t seed = 7;
  bool inject_sign_flip = false;
};

int run_verify(const VerifyArgs& args) {
  std::optional<ts::LightFieldDataset> ds;
  if (!args.lf.empty()) ds = ts::load_dataset(args.lf);
  ts::VerifyOptions options;
  options.oracle_configs = args.configs;
  options.seed = args.seed;
  options.flip_translation_sign = args.inject_sign_flip;
  bool ok = true;
  for (const auto& r : ts::run_verification(ds, options)) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": max deviation " << r.max_deviation
              << " (tolerance " << r.tolerance << ")\n";
    ok = ok && r.passed;
  }
  if (!ok) std::cerr << "verification FAILED\n";
  return ok ? 0 : kExitEngine;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Light-field tilt-shift refocus engine"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Cap on worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);

  RefocusArgs refocus;
  auto* cmd_refocus = app.add_subcommand("refocus", "Render a refocused image");
  cmd_refocus->add_option("--lf", refocus.lf, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  cmd_refocus->add_option("--out", refocus.out, "Output PNG")->required();
  cmd_refocus->add_option("--out-float", refocus.out_float, "Also write the float image as PFM");
  auto* opt_disp = cmd_refocus->add_option("--disparity", refocus.disparity, "Classic shift-and-sum disparity");
  auto* opt_plane = cmd_refocus->add_option("--plane", refocus.plane, "Plane px,py,pz:nx,ny,nz");
  auto* opt_click = cmd_refocus->add_option("--click", refocus.click, "Single-click pixel u,v");
  auto* opt_manual = cmd_refocus->add_option("--manual", refocus.manual, "Keyboard plane z,rot_x,rot_y");
  opt_disp->excludes(opt_plane)->excludes(opt_click)->excludes(opt_manual);
  opt_plane->excludes(opt_click)->excludes(opt_manual);
  opt_click->excludes(opt_manual);
  cmd_refocus->add_option("--reference", refocus.reference, "Reference angular position s,t");
  cmd_refocus->add_option("--radius", refocus.radius, "Aperture radius in grid steps");
  cmd_refocus->add_option("--profile", refocus.profile, "Aperture profile")
      ->check(CLI::IsMember({"uniform", "gaussian"}));

  PointcloudArgs pointcloud;
  auto* cmd_cloud = app.add_subcommand("pointcloud", "Export a PLY point cloud");
  cmd_cloud->add_option("--lf", pointcloud.lf, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  cmd_cloud->add_option("--out", pointcloud.out, "Output PLY")->required();
  cmd_cloud->add_option("--stride", pointcloud.stride, "Pixel stride (default: fit 300k points)")
      ->check(CLI::PositiveNumber);
  cmd_cloud->add_option("--normals", pointcloud.normals, "Neighbours for normals, 0 to skip")
      ->check(CLI::NonNegativeNumber);
  cmd_cloud->add_flag("--all-views", pointcloud.all_views, "Merge every view instead of the center one");

  SynthArgs synth;
  auto* cmd_synth = app.add_subcommand("synth", "Write a synthetic textured-plane dataset");
  cmd_synth->add_option("--out", synth.out, "Output directory")->required();
  cmd_synth->add_option("--rows", synth.rows);
  cmd_synth->add_option("--cols", synth.cols);
  cmd_synth->add_option("--width", synth.width);
  cmd_synth->add_option("--height", synth.height);
  cmd_synth->add_option("--focal", synth.focal);
  cmd_synth->add_option("--baseline", synth.baseline);
  cmd_synth->add_option("--depth", synth.depth);
  cmd_synth->add_option("--tilt-x", synth.tilt_x, "Plane tilt about x, degrees");
  cmd_synth->add_option("--tilt-y", synth.tilt_y, "Plane tilt about y, degrees");
  cmd_synth->add_option("--jitter", synth.jitter, "Random camera rotation, degrees");
  cmd_synth->add_option("--magnification", synth.magnification, "View pixels per texel");
  cmd_synth->add_option("--seed", synth.seed);

  VerifyArgs verify;
  auto* cmd_verify = app.add_subcommand("verify", "Run the oracle and frontoparallel equivalence checks");
  cmd_verify->add_option("--lf", verify.lf, "Dataset directory (default: synthetic scenes)")
      ->check(CLI::ExistingDirectory);
  cmd_verify->add_option("--configs", verify.configs, "Random oracle configurations");
  cmd_verify->add_option("--seed", verify.seed);
  cmd_verify->add_flag("--inject-sign-flip", verify.inject_sign_flip)->group("");

  std::string host = "127.0.0.1";
  int port = 8080;
  int idle_minutes = 30;
  auto* cmd_serve = app.add_subcommand("serve", "Run the HTTP studio service");
  cmd_serve->add_option("--host", host);
  cmd_serve->add_option("--port", port);
  cmd_serve->add_option("--idle-timeout", idle_minutes, "Session idle timeout, minutes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  ts::set_thread_count(threads);
  try {
    if (*cmd_refocus) return run_refocus(refocus);
    if (*cmd_cloud) return run_pointcloud(pointcloud);
    if (*cmd_synth) return run_synth(synth);
    if (*cmd_verify) return run_verify(verify);
    if (*cmd_serve) {
      ts::service::ServiceOptions options;
      options.idle_timeout = std::chrono::minutes(idle_minutes);
      return ts::service::serve(host, port, options);
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ts::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitEngine;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitEngine;
  }
  return kExitUsage;
}
