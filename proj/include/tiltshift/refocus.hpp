#pragma once

#include <optional>
#include <variant>
#include <vector>

#include "tiltshift/geometry.hpp"
#include "tiltshift/image.hpp"
#include "tiltshift/lightfield_io.hpp"

namespace tiltshift {

/// Continuous angular coordinates; integer values coincide with grid views.
struct AngularPosition {
  double s = 0.0;
  double t = 0.0;
  bool operator==(const AngularPosition&) const = default;
};

enum class ApertureProfile { Uniform, Gaussian };

struct ApertureEntry {
  ViewIndex view;
  double weight = 0.0;
};

/// Synthetic aperture: a reference position plus normalized per-view weights.
struct Aperture {
  AngularPosition reference;
  std::vector<ApertureEntry> entries;
  double radius = 0.0;
};

/// Views within `radius` of `reference` (inclusive), weighted uniformly or by
/// a Gaussian with sigma = radius / 2, normalized to sum to one.
/// Throws OutOfHull, InvalidArgument (radius <= 0) or EmptyAperture.
Aperture make_aperture(const LightFieldDataset& ds, AngularPosition reference, double radius,
                       ApertureProfile profile = ApertureProfile::Uniform);

/// Builds an aperture from arbitrary non-negative weights, normalizing them.
Aperture normalized_aperture(AngularPosition reference, std::vector<ApertureEntry> entries,
                             double radius = 0.0);

/// Keeps the `max_entries` heaviest views (ties: nearest to the reference,
/// then grid order) and renormalizes.
Aperture cap_aperture(const Aperture& aperture, std::size_t max_entries);

/// A view resampled onto the reference pixel grid. `mask` is the in-bounds
/// share of the bilinear footprint: 1 inside, 0 outside, fractional on the
/// one-pixel boundary band.
struct WarpedView {
  ImageF image;
  FloatMap mask;
};

struct RefocusImage {
  ImageF image;
  /// Sum of aperture weight times mask. Zero means no view covered the pixel
  /// and the image value there is meaningless.
  FloatMap coverage;

  bool covered(int u, int v) const { return coverage.at(u, v) > 0.0f; }
  double covered_fraction() const;
};

/// Output-driven inverse warp: output pixel (u, v) samples `view` at P(u, v)
/// bilinearly. Output size defaults to the view size.
WarpedView warp_view(const Image& view, const ProjectionMap& map, int out_width = 0,
                     int out_height = 0);

/// Generalized shift-and-sum through a refocus plane. `ref_cal` defines the
/// output pixel grid; `out_width`/`out_height` default to the view size.
RefocusImage refocus_generalized(const LightFieldDataset& ds, const Aperture& aperture,
                                 const RefocusPlane& plane, const CameraCalibration& ref_cal,
                                 int out_width = 0, int out_height = 0);

/// Classic shift-and-sum: view (s, t) is sampled at
/// (u + (s - s_r) delta, v + (t - t_r) delta).
RefocusImage shift_and_sum(const LightFieldDataset& ds, const Aperture& aperture, double delta);

/// Calibration of a virtual camera at a continuous angular position: the
/// center is bilinearly interpolated over the grid, K and R come from the
/// nearest view. Throws OutOfHull outside [0, rows-1] x [0, cols-1].
CameraCalibration virtual_calibration(const LightFieldDataset& ds, AngularPosition position);

using FocusTarget = std::variant<RefocusPlane, double>;

/// Refocus seen from a possibly intermediate viewpoint; the aperture is
/// recentred there so new views enter as the viewpoint moves. A plane target
/// uses the generalized path, a disparity target the classic one.
RefocusImage refocus_at_virtual_view(const LightFieldDataset& ds, AngularPosition virtual_ref,
                                     double radius, const FocusTarget& target,
                                     ApertureProfile profile = ApertureProfile::Uniform);

/// Throws OutOfHull when `position` lies outside the grid.
void require_in_hull(const LightFieldDataset& ds, AngularPosition position);

}  // namespace tiltshift
