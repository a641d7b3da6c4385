#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tiltshift/lightfield_io.hpp"
#include "tiltshift/refocus.hpp"

namespace tiltshift {

struct CheckResult {
  std::string name;
  bool passed = false;
  double max_deviation = 0.0;
  double tolerance = 0.0;
};

struct VerifyOptions {
  int oracle_configs = 20;
  std::uint64_t seed = 7;
  /// Negative control: mirrors every camera through the reference before the
  /// generalized path runs, which must break frontoparallel equivalence.
  bool flip_translation_sign = false;
};

/// Max |a - b| over channels of pixels covered in both images.
double max_abs_difference(const RefocusImage& a, const RefocusImage& b);

/// Per-step baseline B when camera (s, t) sits at ((s_r - s) B, (t_r - t) B, 0)
/// relative to the center view with identical K (fx = fy) and R.
std::optional<double> rectified_baseline(const LightFieldDataset& ds);

/// Generalized refocus on frontoparallel planes against shift-and-sum at
/// delta = f B / d. Requires a rectified dataset.
CheckResult check_frontoparallel(const LightFieldDataset& ds, const VerifyOptions& options = {});

/// Generalized refocus against the pointwise oracle on random planes and apertures.
CheckResult check_oracle(const LightFieldDataset& ds, const VerifyOptions& options = {});

/// Runs every check on `ds`, or on freshly rendered synthetic scenes when
/// no dataset is given.
std::vector<CheckResult> run_verification(const std::optional<LightFieldDataset>& ds,
                                          const VerifyOptions& options = {});

}  // namespace tiltshift
