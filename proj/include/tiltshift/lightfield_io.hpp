#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "tiltshift/geometry.hpp"
#include "tiltshift/image.hpp"

namespace tiltshift {

/// Angular index of a view. `s` pairs with the horizontal pixel axis u and
/// `t` with the vertical axis v.
struct ViewIndex {
  int s = 0;
  int t = 0;
  auto operator<=>(const ViewIndex&) const = default;
};

/// Per-pixel disparity in pixels per unit angular step: a scene point seen at
/// (u, v) in view (s, t) appears at (u + ds * disp, v + dt * disp) in view
/// (s + ds, t + dt) of a rectified array. Invalid pixels hold NaN.
class DisparityMap {
 public:
  DisparityMap() = default;
  DisparityMap(int width, int height);

  int width() const { return values_.width(); }
  int height() const { return values_.height(); }

  bool valid(int u, int v) const;
  float at(int u, int v) const { return values_.at(u, v); }
  void set(int u, int v, float value) { values_.at(u, v) = value; }
  void invalidate(int u, int v);

  const FloatMap& values() const { return values_; }
  FloatMap& values() { return values_; }

 private:
  FloatMap values_;
};

/// A fully validated grid of calibrated views. Immutable after construction.
class LightFieldDataset {
 public:
  /// Views, calibrations and disparities are indexed s * grid_cols + t.
  /// Throws MissingView, DimensionMismatch or MalformedManifest when the
  /// grid is incomplete or inconsistent.
  LightFieldDataset(int grid_rows, int grid_cols, std::vector<Image> views,
                    std::vector<CameraCalibration> calibrations,
                    std::vector<std::optional<DisparityMap>> disparities = {},
                    nlohmann::json meta = nlohmann::json::object());

  int grid_rows() const { return rows_; }
  int grid_cols() const { return cols_; }
  int view_count() const { return rows_ * cols_; }
  int width() const { return views_.front().width(); }
  int height() const { return views_.front().height(); }

  bool contains(ViewIndex idx) const {
    return idx.s >= 0 && idx.t >= 0 && idx.s < rows_ && idx.t < cols_;
  }
  ViewIndex center() const { return {(rows_ - 1) / 2, (cols_ - 1) / 2}; }

  const Image& view(ViewIndex idx) const { return views_.at(flat(idx)); }
  const CameraCalibration& calibration(ViewIndex idx) const { return cals_.at(flat(idx)); }
  const std::optional<DisparityMap>& disparity(ViewIndex idx) const {
    return disparities_.at(flat(idx));
  }
  bool has_disparity() const;

  const nlohmann::json& meta() const { return meta_; }

 private:
  int flat(ViewIndex idx) const;

  int rows_;
  int cols_;
  std::vector<Image> views_;
  std::vector<CameraCalibration> cals_;
  std::vector<std::optional<DisparityMap>> disparities_;
  nlohmann::json meta_;
};

/// Reads `lightfield.json` from `dir` together with every referenced view and
/// any `disp_{s}_{t}.pfm` maps. Disparity values are multiplied by the
/// manifest's `disparity_scale`.
LightFieldDataset load_dataset(const std::filesystem::path& dir);

/// Writes `ds` in the layout read by load_dataset (disparities with scale 1).
void write_dataset(const LightFieldDataset& ds, const std::filesystem::path& dir);

Image load_image(const std::filesystem::path& path);
void save_image(const Image& img, const std::filesystem::path& path);
std::string encode_png(const Image& img);

/// Little-endian single channel PFM; NaN marks invalid pixels.
FloatMap load_pfm(const std::filesystem::path& path);
void save_pfm(const FloatMap& map, const std::filesystem::path& path);

/// Three channel PFM, used for lossless float refocus output.
void save_pfm(const ImageF& img, const std::filesystem::path& path);
ImageF load_pfm_rgb(const std::filesystem::path& path);

}  // namespace tiltshift
