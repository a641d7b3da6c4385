#include "tiltshift/verify.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "tiltshift/errors.hpp"
#include "tiltshift/synthetic.hpp"

namespace tiltshift {

namespace {

constexpr double kEquivalenceTolerance = 1e-6;

LightFieldDataset mirrored_cameras(const LightFieldDataset& ds, ViewIndex ref) {
  const Vec3 pivot = ds.calibration(ref).center();
  std::vector<Image> views;
  std::vector<CameraCalibration> cals;
  std::vector<std::optional<DisparityMap>> disparities;
  for (int s = 0; s < ds.grid_rows(); ++s) {
    for (int t = 0; t < ds.grid_cols(); ++t) {
      const auto& cal = ds.calibration({s, t});
      views.push_back(ds.view({s, t}));
      cals.emplace_back(cal.K(), cal.R(), 2.0 * pivot - cal.center());
      disparities.push_back(ds.disparity({s, t}));
    }
  }
  return {ds.grid_rows(), ds.grid_cols(), std::move(views), std::move(cals), std::move(disparities), ds.meta()};
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

}  // namespace

double max_abs_difference(const RefocusImage& a, const RefocusImage& b) {
  if (a.image.width() != b.image.width() || a.image.height() != b.image.height()) {
    throw Error(ErrorCode::DimensionMismatch, "refocus images differ in size");
  }
  double worst = 0.0;
  for (int v = 0; v < a.image.height(); ++v) {
    for (int u = 0; u < a.image.width(); ++u) {
      if (!a.covered(u, v) || !b.covered(u, v)) continue;
      for (int c = 0; c < 3; ++c) {
        worst = std::max(worst, std::abs(static_cast<double>(a.image.at(u, v, c)) - b.image.at(u, v, c)));
      }
    }
  }
  return worst;
}

std::optional<double> rectified_baseline(const LightFieldDataset& ds) {
  const ViewIndex ref = ds.center();
  const CameraCalibration& rc = ds.calibration(ref);
  if (std::abs(rc.K()(0, 0) - rc.K()(1, 1)) > 1e-12 * rc.K()(0, 0) || rc.K()(0, 1) != 0.0) return std::nullopt;
  std::optional<double> baseline;
  for (int s = 0; s < ds.grid_rows(); ++s) {
    for (int t = 0; t < ds.grid_cols(); ++t) {
      if (s == ref.s && t == ref.t) continue;
      const auto& cal = ds.calibration({s, t});
      if ((cal.K() - rc.K()).cwiseAbs().maxCoeff() > 1e-9 || (cal.R() - rc.R()).cwiseAbs().maxCoeff() > 1e-12) {
        return std::nullopt;
      }
      const Vec3 offset = rc.R() * (cal.center() - rc.center());
      const int steps = s != ref.s ? ref.s - s : ref.t - t;
      const double b = (s != ref.s ? offset.x() : offset.y()) / steps;
      if (!baseline) baseline = b;
      const Vec3 expected((ref.s - s) * *baseline, (ref.t - t) * *baseline, 0.0);
      if ((offset - expected).norm() > 1e-9 * std::max(1.0, std::abs(*baseline))) return std::nullopt;
    }
  }
  return baseline;
}

CheckResult check_frontoparallel(const LightFieldDataset& ds, const VerifyOptions& options) {
  const auto baseline = rectified_baseline(ds);
  if (!baseline) throw Error(ErrorCode::InvalidArgument, "frontoparallel check needs a rectified array");
  const ViewIndex ref = ds.center();
  const CameraCalibration& ref_cal = ds.calibration(ref);
  const double focal = ref_cal.K()(0, 0);
  const LightFieldDataset mirrored = options.flip_translation_sign ? mirrored_cameras(ds, ref) : ds;
  const Aperture aperture = make_aperture(ds, {double(ref.s), double(ref.t)},
                                          std::hypot(ds.grid_rows(), ds.grid_cols()));
  CheckResult result{"frontoparallel equivalence", true, 0.0, kEquivalenceTolerance};
  for (const double depth : {1.5, 2.0, 2.7, 3.9}) {
    const RefocusPlane plane(ref_cal.center() + depth * ref_cal.optical_axis(), ref_cal.optical_axis());
    const RefocusImage general = refocus_generalized(mirrored, aperture, plane, ref_cal);
    const RefocusImage classic = shift_and_sum(ds, aperture, focal * *baseline / depth);
    result.max_deviation = std::max(result.max_deviation, max_abs_difference(general, classic));
  }
  result.passed = result.max_deviation <= result.tolerance;
  return result;
}

CheckResult check_oracle(const LightFieldDataset& ds, const VerifyOptions& options) {
  std::mt19937_64 rng(options.seed);
  CheckResult result{"oracle equivalence", true, 0.0, kEquivalenceTolerance};
  const ViewIndex center = ds.center();
  const CameraCalibration& cc = ds.calibration(center);
  // Typical scene depth: the disparity median if known, else 2 m.
  double depth = 2.0;
  if (const auto& disp = ds.disparity(center)) {
    std::vector<float> values;
    for (float d : disp->values().data()) {
      if (std::isfinite(d)) values.push_back(d);
    }
    if (!values.empty() && ds.view_count() > 1) {
      std::nth_element(values.begin(), values.begin() + values.size() / 2, values.end());
      if (const auto b = rectified_baseline(ds); b && values[values.size() / 2] != 0.0) {
        depth = std::abs(cc.K()(0, 0) * *b / values[values.size() / 2]);
      }
    }
  }
  for (int i = 0; i < options.oracle_configs; ++i) {
    const AngularPosition reference =
        i % 2 == 0 ? AngularPosition{double(rng() % ds.grid_rows()), double(rng() % ds.grid_cols())}
                   : AngularPosition{uniform(rng, 0.0, ds.grid_rows() - 1), uniform(rng, 0.0, ds.grid_cols() - 1)};
    const double radius = uniform(rng, 0.8, 2.5);
    const ApertureProfile profile = rng() % 2 ? ApertureProfile::Gaussian : ApertureProfile::Uniform;
    const Aperture aperture = make_aperture(ds, reference, radius, profile);
    const CameraCalibration ref_cal = virtual_calibration(ds, reference);
    const Vec3 lateral = ref_cal.R().transpose() * Vec3(uniform(rng, -0.2, 0.2), uniform(rng, -0.2, 0.2), 0.0);
    const Vec3 point = ref_cal.center() + uniform(rng, 0.75 * depth, 1.5 * depth) * ref_cal.optical_axis() + lateral;
    const Vec3 normal = ref_cal.R().transpose() * Vec3(uniform(rng, -0.5, 0.5), uniform(rng, -0.5, 0.5), 1.0);
    const RefocusPlane plane(point, rng() % 2 ? normal : Vec3(-normal));
    const RefocusImage engine = refocus_generalized(ds, aperture, plane, ref_cal);
    const RefocusImage oracle = oracle_refocus(ds, aperture, plane, ref_cal);
    result.max_deviation = std::max(result.max_deviation, max_abs_difference(engine, oracle));
  }
  result.passed = result.max_deviation <= result.tolerance;
  return result;
}

std::vector<CheckResult> run_verification(const std::optional<LightFieldDataset>& ds,
                                          const VerifyOptions& options) {
  std::vector<CheckResult> results;
  if (ds) {
    if (rectified_baseline(*ds)) results.push_back(check_frontoparallel(*ds, options));
    results.push_back(check_oracle(*ds, options));
    return results;
  }
  CameraGridOptions rectified;
  const LightFieldDataset fronto =
      render_scene(make_plane_scene(RefocusPlane(Vec3(0.0, 0.0, 2.0), Vec3::UnitZ()), rectified));
  results.push_back(check_frontoparallel(fronto, options));

  CameraGridOptions jittered;
  jittered.width = jittered.height = 32;
  jittered.jitter_deg = 2.0;
  jittered.seed = options.seed;
  const LightFieldDataset tilted = render_scene(
      make_plane_scene(RefocusPlane(Vec3(0.0, 0.0, 2.0), Vec3(0.3, -0.2, 1.0)), jittered));
  results.push_back(check_oracle(tilted, options));
  return results;
}

}  // namespace tiltshift
