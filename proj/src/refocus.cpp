#include "tiltshift/refocus.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "tiltshift/errors.hpp"
#include "tiltshift/parallel.hpp"

namespace tiltshift {

namespace {

constexpr double kInv255 = 1.0 / 255.0;
// Normalized weights are snapped to multiples of 2^-40 so that rescaling the
// raw weights by any positive constant yields identical normalized values.
constexpr double kWeightQuantum = 1.0 / 1099511627776.0;

struct Sample {
  double rgb[3] = {0.0, 0.0, 0.0};
  double mask = 0.0;
};

// Bilinear sample at (x, y). Out-of-bounds taps are dropped; the colour is
// renormalized over the in-bounds taps and `mask` carries their weight sum.
Sample sample_bilinear(const Image& img, double x, double y) {
  Sample out;
  const double fx0 = std::floor(x);
  const double fy0 = std::floor(y);
  if (fx0 < -1.0 || fy0 < -1.0 || fx0 >= img.width() || fy0 >= img.height()) return out;
  const int x0 = static_cast<int>(fx0);
  const int y0 = static_cast<int>(fy0);
  const double ax = x - fx0;
  const double ay = y - fy0;
  const double wx[2] = {1.0 - ax, ax};
  const double wy[2] = {1.0 - ay, ay};
  for (int j = 0; j < 2; ++j) {
    const int yy = y0 + j;
    if (yy < 0 || yy >= img.height() || wy[j] == 0.0) continue;
    for (int i = 0; i < 2; ++i) {
      const int xx = x0 + i;
      if (xx < 0 || xx >= img.width() || wx[i] == 0.0) continue;
      const double w = wx[i] * wy[j];
      const std::uint8_t* px = img.pixel(xx, yy);
      out.rgb[0] += w * px[0];
      out.rgb[1] += w * px[1];
      out.rgb[2] += w * px[2];
      out.mask += w;
    }
  }
  if (out.mask > 0.0) {
    const double scale = kInv255 / out.mask;
    for (double& c : out.rgb) c *= scale;
  }
  return out;
}

template <typename Mapping>
WarpedView resample(const Image& view, int out_w, int out_h, Mapping&& map) {
  WarpedView out{ImageF(out_w, out_h), FloatMap(out_w, out_h)};
  parallel_for(0, out_h, [&](int v) {
    for (int u = 0; u < out_w; ++u) {
      const std::optional<Vec2> src = map(u, v);
      if (!src) continue;
      const Sample s = sample_bilinear(view, src->x(), src->y());
      if (s.mask <= 0.0) continue;
      float* dst = out.image.pixel(u, v);
      for (int c = 0; c < 3; ++c) dst[c] = static_cast<float>(s.rgb[c]);
      out.mask.at(u, v) = static_cast<float>(s.mask);
    }
  });
  return out;
}

// Weighted masked accumulation in aperture order; the per-pixel summation
// order is fixed, so results do not depend on the thread count.
class Accumulator {
 public:
  Accumulator(int w, int h) : sum_(w, h), weight_(w, h) {}

  void add(const WarpedView& warped, double aperture_weight) {
    const auto a = static_cast<float>(aperture_weight);
    parallel_for(0, sum_.height(), [&](int v) {
      for (int u = 0; u < sum_.width(); ++u) {
        const float m = warped.mask.at(u, v);
        if (m <= 0.0f) continue;
        const float am = a * m;
        const float* src = warped.image.pixel(u, v);
        float* dst = sum_.pixel(u, v);
        for (int c = 0; c < 3; ++c) dst[c] += am * src[c];
        weight_.at(u, v) += am;
      }
    });
  }

  RefocusImage finish() && {
    parallel_for(0, sum_.height(), [&](int v) {
      for (int u = 0; u < sum_.width(); ++u) {
        const float w = weight_.at(u, v);
        float* px = sum_.pixel(u, v);
        for (int c = 0; c < 3; ++c) px[c] = w > 0.0f ? px[c] / w : 0.0f;
      }
    });
    return {std::move(sum_), std::move(weight_)};
  }

 private:
  ImageF sum_;
  FloatMap weight_;
};

void validate_aperture(const LightFieldDataset& ds, const Aperture& aperture) {
  if (aperture.entries.empty()) throw Error(ErrorCode::EmptyAperture, "aperture has no views");
  for (const auto& e : aperture.entries) {
    if (!ds.contains(e.view)) throw Error(ErrorCode::OutOfRange, "aperture view outside the grid");
  }
}

}  // namespace

double RefocusImage::covered_fraction() const {
  if (coverage.empty()) return 0.0;
  std::size_t n = 0;
  for (float c : coverage.data()) n += c > 0.0f ? 1 : 0;
  return static_cast<double>(n) / static_cast<double>(coverage.pixel_count());
}

void require_in_hull(const LightFieldDataset& ds, AngularPosition position) {
  const bool inside = position.s >= 0.0 && position.t >= 0.0 &&
                      position.s <= ds.grid_rows() - 1 && position.t <= ds.grid_cols() - 1;
  if (!inside) {
    throw Error(ErrorCode::OutOfHull, "reference (" + std::to_string(position.s) + ", " +
                                          std::to_string(position.t) + ") is outside the grid");
  }
}

Aperture normalized_aperture(AngularPosition reference, std::vector<ApertureEntry> entries,
                             double radius) {
  double total = 0.0;
  for (const auto& e : entries) {
    if (!(e.weight >= 0.0) || !std::isfinite(e.weight)) {
      throw Error(ErrorCode::InvalidArgument, "aperture weights must be finite and >= 0");
    }
    total += e.weight;
  }
  std::erase_if(entries, [](const ApertureEntry& e) { return e.weight == 0.0; });
  if (entries.empty() || !(total > 0.0)) {
    throw Error(ErrorCode::EmptyAperture, "aperture has no positive weight");
  }
  for (auto& e : entries) e.weight = std::round(e.weight / total / kWeightQuantum) * kWeightQuantum;
  std::erase_if(entries, [](const ApertureEntry& e) { return e.weight == 0.0; });
  return {reference, std::move(entries), radius};
}

Aperture make_aperture(const LightFieldDataset& ds, AngularPosition reference, double radius,
                       ApertureProfile profile) {
  require_in_hull(ds, reference);
  if (!(radius > 0.0)) throw Error(ErrorCode::InvalidArgument, "aperture radius must be positive");
  const double sigma = radius / 2.0;
  std::vector<ApertureEntry> entries;
  for (int s = 0; s < ds.grid_rows(); ++s) {
    for (int t = 0; t < ds.grid_cols(); ++t) {
      const double ds2 = (s - reference.s) * (s - reference.s) + (t - reference.t) * (t - reference.t);
      if (std::sqrt(ds2) > radius + 1e-12) continue;
      const double w = profile == ApertureProfile::Uniform ? 1.0 : std::exp(-ds2 / (2.0 * sigma * sigma));
      entries.push_back({{s, t}, w});
    }
  }
  if (entries.empty()) throw Error(ErrorCode::EmptyAperture, "no view within the aperture radius");
  return normalized_aperture(reference, std::move(entries), radius);
}

Aperture cap_aperture(const Aperture& aperture, std::size_t max_entries) {
  if (aperture.entries.size() <= max_entries) return aperture;
  auto entries = aperture.entries;
  const auto dist = [&](const ApertureEntry& e) {
    return std::hypot(e.view.s - aperture.reference.s, e.view.t - aperture.reference.t);
  };
  std::stable_sort(entries.begin(), entries.end(), [&](const ApertureEntry& a, const ApertureEntry& b) {
    if (a.weight != b.weight) return a.weight > b.weight;
    return dist(a) < dist(b);
  });
  entries.resize(max_entries);
  std::sort(entries.begin(), entries.end(),
            [](const ApertureEntry& a, const ApertureEntry& b) { return a.view < b.view; });
  return normalized_aperture(aperture.reference, std::move(entries), aperture.radius);
}

WarpedView warp_view(const Image& view, const ProjectionMap& map, int out_width, int out_height) {
  if (std::abs(map.P.determinant()) < 1e-300 || !map.P.allFinite()) {
    throw Error(ErrorCode::SingularProjection, "projection map is not invertible");
  }
  const int w = out_width > 0 ? out_width : view.width();
  const int h = out_height > 0 ? out_height : view.height();
  return resample(view, w, h, [&](int u, int v) { return try_apply_projection(map, Vec2(u, v)); });
}

RefocusImage refocus_generalized(const LightFieldDataset& ds, const Aperture& aperture,
                                 const RefocusPlane& plane, const CameraCalibration& ref_cal,
                                 int out_width, int out_height) {
  validate_aperture(ds, aperture);
  plane_distance(plane, ref_cal);
  const int w = out_width > 0 ? out_width : ds.width();
  const int h = out_height > 0 ? out_height : ds.height();
  Accumulator acc(w, h);
  for (const auto& entry : aperture.entries) {
    const ProjectionMap map = projection_map(ds.calibration(entry.view), ref_cal, plane);
    acc.add(warp_view(ds.view(entry.view), map, w, h), entry.weight);
  }
  return std::move(acc).finish();
}

RefocusImage shift_and_sum(const LightFieldDataset& ds, const Aperture& aperture, double delta) {
  validate_aperture(ds, aperture);
  Accumulator acc(ds.width(), ds.height());
  for (const auto& entry : aperture.entries) {
    const double dx = (entry.view.s - aperture.reference.s) * delta;
    const double dy = (entry.view.t - aperture.reference.t) * delta;
    acc.add(resample(ds.view(entry.view), ds.width(), ds.height(),
                     [&](int u, int v) { return std::optional<Vec2>(Vec2(u + dx, v + dy)); }),
            entry.weight);
  }
  return std::move(acc).finish();
}

CameraCalibration virtual_calibration(const LightFieldDataset& ds, AngularPosition position) {
  require_in_hull(ds, position);
  const auto bracket = [](double x, int count) {
    const int lo = std::min(static_cast<int>(std::floor(x)), std::max(count - 2, 0));
    return std::pair{lo, x - lo};
  };
  const auto [s0, fs] = bracket(position.s, ds.grid_rows());
  const auto [t0, ft] = bracket(position.t, ds.grid_cols());
  const int s1 = std::min(s0 + 1, ds.grid_rows() - 1);
  const int t1 = std::min(t0 + 1, ds.grid_cols() - 1);
  const Vec3 center = (1.0 - fs) * ((1.0 - ft) * ds.calibration({s0, t0}).center() +
                                    ft * ds.calibration({s0, t1}).center()) +
                      fs * ((1.0 - ft) * ds.calibration({s1, t0}).center() +
                            ft * ds.calibration({s1, t1}).center());
  const ViewIndex nearest{static_cast<int>(std::round(position.s)),
                          static_cast<int>(std::round(position.t))};
  const auto& base = ds.calibration(nearest);
  return {base.K(), base.R(), center};
}

RefocusImage refocus_at_virtual_view(const LightFieldDataset& ds, AngularPosition virtual_ref,
                                     double radius, const FocusTarget& target,
                                     ApertureProfile profile) {
  const Aperture aperture = make_aperture(ds, virtual_ref, radius, profile);
  if (const auto* delta = std::get_if<double>(&target)) return shift_and_sum(ds, aperture, *delta);
  return refocus_generalized(ds, aperture, std::get<RefocusPlane>(target),
                             virtual_calibration(ds, virtual_ref));
}

}  // namespace tiltshift
