#include "tiltshift/lightfield_io.hpp"

#include <png.h>

#include <Eigen/SVD>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "tiltshift/errors.hpp"

namespace tiltshift {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kManifestName = "lightfield.json";
constexpr const char* kDefaultViewPattern = "view_{s}_{t}.png";
constexpr const char* kDefaultDisparityPattern = "disp_{s}_{t}.pfm";

std::string expand_pattern(std::string pattern, ViewIndex idx) {
  auto replace = [&](const std::string& key, int value) {
    for (std::size_t pos = pattern.find(key); pos != std::string::npos;
         pos = pattern.find(key, pos)) {
      const std::string text = std::to_string(value);
      pattern.replace(pos, key.size(), text);
      pos += text.size();
    }
  };
  replace("{s}", idx.s);
  replace("{t}", idx.t);
  return pattern;
}

std::string describe(ViewIndex idx) {
  return "(" + std::to_string(idx.s) + "," + std::to_string(idx.t) + ")";
}

// Rotations written with limited precision are snapped back onto SO(3).
Mat3 snap_rotation(const Mat3& R) {
  if ((R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6) return R;
  Eigen::JacobiSVD<Mat3> svd(R, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().transpose();
}

CameraCalibration parse_calibration(const json& entry) {
  const double fx = entry.at("fx").get<double>();
  const double fy = entry.at("fy").get<double>();
  const double cx = entry.at("cx").get<double>();
  const double cy = entry.at("cy").get<double>();
  Mat3 R = Mat3::Identity();
  if (entry.contains("R")) {
    const auto values = entry.at("R").get<std::vector<double>>();
    if (values.size() != 9) throw Error(ErrorCode::MalformedManifest, "R needs 9 values");
    for (int i = 0; i < 9; ++i) R(i / 3, i % 3) = values[i];
  }
  Vec3 t = Vec3::Zero();
  if (entry.contains("t")) {
    const auto values = entry.at("t").get<std::vector<double>>();
    if (values.size() != 3) throw Error(ErrorCode::MalformedManifest, "t needs 3 values");
    t = Vec3(values[0], values[1], values[2]);
  }
  return CameraCalibration::from_intrinsics(fx, fy, cx, cy, snap_rotation(R), t);
}

void write_pfm(const fs::path& path, const char* magic, int width, int height, int channels,
               const float* data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
  out << magic << "\n" << width << " " << height << "\n-1.0\n";
  static_assert(std::endian::native == std::endian::little, "PFM writer assumes little endian");
  const std::size_t row = static_cast<std::size_t>(width) * channels;
  for (int v = height - 1; v >= 0; --v) {
    out.write(reinterpret_cast<const char*>(data + row * v),
              static_cast<std::streamsize>(row * sizeof(float)));
  }
  if (!out) throw Error(ErrorCode::IoFailure, "short write to " + path.string());
}

std::uint32_t byteswap32(std::uint32_t x) {
  return (x >> 24) | ((x >> 8) & 0xff00u) | ((x << 8) & 0xff0000u) | (x << 24);
}

std::vector<float> read_pfm(const fs::path& path, int expected_channels, int& width, int& height) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::string magic;
  double scale = 0.0;
  in >> magic >> width >> height >> scale;
  in.get();
  const int channels = magic == "PF" ? 3 : magic == "Pf" ? 1 : 0;
  if (!in || channels != expected_channels || width <= 0 || height <= 0) {
    throw Error(ErrorCode::IoFailure, "unsupported PFM header in " + path.string());
  }
  const std::size_t row = static_cast<std::size_t>(width) * channels;
  std::vector<float> data(row * height);
  for (int v = height - 1; v >= 0; --v) {
    in.read(reinterpret_cast<char*>(data.data() + row * v),
            static_cast<std::streamsize>(row * sizeof(float)));
  }
  if (!in) throw Error(ErrorCode::IoFailure, "truncated PFM " + path.string());
  if ((scale > 0.0) == (std::endian::native == std::endian::little)) {
    for (float& f : data) {
      f = std::bit_cast<float>(byteswap32(std::bit_cast<std::uint32_t>(f)));
    }
  }
  return data;
}

}  // namespace

DisparityMap::DisparityMap(int width, int height)
    : values_(width, height, std::numeric_limits<float>::quiet_NaN()) {}

bool DisparityMap::valid(int u, int v) const {
  return values_.contains(u, v) && std::isfinite(values_.at(u, v));
}

void DisparityMap::invalidate(int u, int v) {
  values_.at(u, v) = std::numeric_limits<float>::quiet_NaN();
}

LightFieldDataset::LightFieldDataset(int grid_rows, int grid_cols, std::vector<Image> views,
                                     std::vector<CameraCalibration> calibrations,
                                     std::vector<std::optional<DisparityMap>> disparities,
                                     json meta)
    : rows_(grid_rows),
      cols_(grid_cols),
      views_(std::move(views)),
      cals_(std::move(calibrations)),
      disparities_(std::move(disparities)),
      meta_(std::move(meta)) {
  if (rows_ <= 0 || cols_ <= 0) {
    throw Error(ErrorCode::MalformedManifest, "grid dimensions must be positive");
  }
  const auto n = static_cast<std::size_t>(rows_) * cols_;
  if (views_.size() != n) {
    throw Error(ErrorCode::MissingView, "expected " + std::to_string(n) + " views, got " +
                                            std::to_string(views_.size()));
  }
  if (cals_.size() != n) {
    throw Error(ErrorCode::MalformedManifest, "expected " + std::to_string(n) +
                                                  " calibrations, got " +
                                                  std::to_string(cals_.size()));
  }
  if (disparities_.empty()) disparities_.resize(n);
  if (disparities_.size() != n) {
    throw Error(ErrorCode::MalformedManifest, "disparity list does not match the grid");
  }
  const int w = views_.front().width();
  const int h = views_.front().height();
  if (w <= 0 || h <= 0) throw Error(ErrorCode::DimensionMismatch, "views are empty");
  for (std::size_t i = 0; i < n; ++i) {
    const ViewIndex idx{static_cast<int>(i) / cols_, static_cast<int>(i) % cols_};
    if (views_[i].width() != w || views_[i].height() != h) {
      throw Error(ErrorCode::DimensionMismatch, "view " + describe(idx) + " is " +
                                                    std::to_string(views_[i].width()) + "x" +
                                                    std::to_string(views_[i].height()) +
                                                    ", expected " + std::to_string(w) + "x" +
                                                    std::to_string(h));
    }
    if (disparities_[i] && (disparities_[i]->width() != w || disparities_[i]->height() != h)) {
      throw Error(ErrorCode::DimensionMismatch,
                  "disparity map " + describe(idx) + " does not match the view size");
    }
  }
}

bool LightFieldDataset::has_disparity() const {
  for (const auto& d : disparities_) {
    if (d) return true;
  }
  return false;
}

int LightFieldDataset::flat(ViewIndex idx) const {
  if (!contains(idx)) throw Error(ErrorCode::OutOfRange, "view " + describe(idx) + " not in grid");
  return idx.s * cols_ + idx.t;
}

LightFieldDataset load_dataset(const fs::path& dir) {
  const fs::path manifest_path = dir / kManifestName;
  std::ifstream in(manifest_path);
  if (!in) throw Error(ErrorCode::NotFound, "no " + manifest_path.string());

  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedManifest, e.what());
  }

  int rows = 0;
  int cols = 0;
  std::string view_pattern;
  std::string disparity_pattern;
  double disparity_scale = 1.0;
  std::vector<std::optional<CameraCalibration>> slots;
  try {
    rows = manifest.at("grid_rows").get<int>();
    cols = manifest.at("grid_cols").get<int>();
    if (rows <= 0 || cols <= 0) {
      throw Error(ErrorCode::MalformedManifest, "grid dimensions must be positive");
    }
    view_pattern = manifest.value("view_pattern", std::string(kDefaultViewPattern));
    disparity_pattern = manifest.value("disparity_pattern", std::string(kDefaultDisparityPattern));
    disparity_scale = manifest.value("disparity_scale", 1.0);
    slots.resize(static_cast<std::size_t>(rows) * cols);
    for (const json& entry : manifest.at("calibrations")) {
      const auto view = entry.at("view").get<std::vector<int>>();
      if (view.size() != 2) throw Error(ErrorCode::MalformedManifest, "view needs [s, t]");
      const ViewIndex idx{view[0], view[1]};
      if (idx.s < 0 || idx.t < 0 || idx.s >= rows || idx.t >= cols) {
        throw Error(ErrorCode::MalformedManifest, "calibration " + describe(idx) + " outside grid");
      }
      auto& slot = slots[static_cast<std::size_t>(idx.s) * cols + idx.t];
      if (slot) throw Error(ErrorCode::MalformedManifest, "duplicate calibration " + describe(idx));
      slot = parse_calibration(entry);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedManifest, e.what());
  }

  std::vector<Image> views;
  std::vector<CameraCalibration> cals;
  std::vector<std::optional<DisparityMap>> disparities;
  for (int s = 0; s < rows; ++s) {
    for (int t = 0; t < cols; ++t) {
      const ViewIndex idx{s, t};
      const fs::path image_path = dir / expand_pattern(view_pattern, idx);
      if (!fs::exists(image_path)) {
        throw Error(ErrorCode::MissingView,
                    "view " + describe(idx) + " missing: " + image_path.string());
      }
      const auto& slot = slots[static_cast<std::size_t>(s) * cols + t];
      if (!slot) throw Error(ErrorCode::MalformedManifest, "no calibration for " + describe(idx));
      views.push_back(load_image(image_path));
      cals.push_back(*slot);

      const fs::path disp_path = dir / expand_pattern(disparity_pattern, idx);
      if (fs::exists(disp_path)) {
        DisparityMap disp;
        disp.values() = load_pfm(disp_path);
        if (disparity_scale != 1.0) {
          for (float& value : disp.values().data()) value *= static_cast<float>(disparity_scale);
        }
        disparities.emplace_back(std::move(disp));
      } else {
        disparities.emplace_back();
      }
    }
  }

  json meta = manifest.value("meta", json::object());
  if (manifest.contains("name")) meta["name"] = manifest["name"];
  if (manifest.contains("units")) meta["units"] = manifest["units"];
  return {rows, cols, std::move(views), std::move(cals), std::move(disparities), std::move(meta)};
}

void write_dataset(const LightFieldDataset& ds, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + dir.string() + ": " + ec.message());

  json manifest;
  manifest["grid_rows"] = ds.grid_rows();
  manifest["grid_cols"] = ds.grid_cols();
  manifest["view_pattern"] = kDefaultViewPattern;
  manifest["disparity_pattern"] = kDefaultDisparityPattern;
  manifest["disparity_scale"] = 1.0;
  if (ds.meta().contains("name")) manifest["name"] = ds.meta()["name"];
  manifest["units"] = ds.meta().value("units", std::string("meters"));
  manifest["meta"] = ds.meta();
  json cals = json::array();
  for (int s = 0; s < ds.grid_rows(); ++s) {
    for (int t = 0; t < ds.grid_cols(); ++t) {
      const ViewIndex idx{s, t};
      const auto& cal = ds.calibration(idx);
      std::vector<double> R(9);
      for (int i = 0; i < 9; ++i) R[i] = cal.R()(i / 3, i % 3);
      cals.push_back({{"view", {s, t}},
                      {"fx", cal.K()(0, 0)},
                      {"fy", cal.K()(1, 1)},
                      {"cx", cal.K()(0, 2)},
                      {"cy", cal.K()(1, 2)},
                      {"R", R},
                      {"t", {cal.t().x(), cal.t().y(), cal.t().z()}}});
      save_image(ds.view(idx), dir / expand_pattern(kDefaultViewPattern, idx));
      if (const auto& disp = ds.disparity(idx)) {
        save_pfm(disp->values(), dir / expand_pattern(kDefaultDisparityPattern, idx));
      }
    }
  }
  manifest["calibrations"] = std::move(cals);

  std::ofstream out(dir / kManifestName);
  out << manifest.dump(2) << "\n";
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write manifest in " + dir.string());
}

Image load_image(const fs::path& path) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.string().c_str())) {
    throw Error(ErrorCode::IoFailure, "cannot read " + path.string() + ": " + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  Image img(static_cast<int>(png.width), static_cast<int>(png.height));
  if (!png_image_finish_read(&png, nullptr, img.data().data(), 0, nullptr)) {
    png_image_free(&png);
    throw Error(ErrorCode::IoFailure, "cannot decode " + path.string() + ": " + png.message);
  }
  return img;
}

namespace {

png_image describe_png(const Image& img) {
  if (img.empty()) throw Error(ErrorCode::InvalidArgument, "cannot encode an empty image");
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width());
  png.height = static_cast<png_uint_32>(img.height());
  png.format = PNG_FORMAT_RGB;
  return png;
}

}  // namespace

void save_image(const Image& img, const fs::path& path) {
  png_image png = describe_png(img);
  if (!png_image_write_to_file(&png, path.string().c_str(), 0, img.data().data(), 0, nullptr)) {
    throw Error(ErrorCode::IoFailure, "cannot write " + path.string() + ": " + png.message);
  }
}

std::string encode_png(const Image& img) {
  png_image png = describe_png(img);
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&png, nullptr, &size, 0, img.data().data(), 0, nullptr)) {
    throw Error(ErrorCode::IoFailure, std::string("cannot size PNG: ") + png.message);
  }
  std::string bytes(size, '\0');
  if (!png_image_write_to_memory(&png, bytes.data(), &size, 0, img.data().data(), 0, nullptr)) {
    throw Error(ErrorCode::IoFailure, std::string("cannot encode PNG: ") + png.message);
  }
  bytes.resize(size);
  return bytes;
}

FloatMap load_pfm(const fs::path& path) {
  int w = 0;
  int h = 0;
  auto data = read_pfm(path, 1, w, h);
  FloatMap map(w, h);
  map.data() = std::move(data);
  return map;
}

void save_pfm(const FloatMap& map, const fs::path& path) {
  write_pfm(path, "Pf", map.width(), map.height(), 1, map.data().data());
}

void save_pfm(const ImageF& img, const fs::path& path) {
  write_pfm(path, "PF", img.width(), img.height(), 3, img.data().data());
}

ImageF load_pfm_rgb(const fs::path& path) {
  int w = 0;
  int h = 0;
  auto data = read_pfm(path, 3, w, h);
  ImageF img(w, h);
  img.data() = std::move(data);
  return img;
}

}  // namespace tiltshift
