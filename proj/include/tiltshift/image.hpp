#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace tiltshift {

/// Interleaved, row-major raster. Pixel (u, v) is column u, row v; the origin
/// is the center of the top-left pixel.
template <typename T, int Channels>
class Raster {
 public:
  static constexpr int kChannels = Channels;

  Raster() = default;
  Raster(int width, int height, T fill = T{})
      : width_(width), height_(height),
        data_(static_cast<std::size_t>(width) * height * Channels, fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return data_.empty(); }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }

  bool contains(int u, int v) const { return u >= 0 && v >= 0 && u < width_ && v < height_; }

  T& at(int u, int v, int c = 0) { return data_[index(u, v) + c]; }
  const T& at(int u, int v, int c = 0) const { return data_[index(u, v) + c]; }

  T* pixel(int u, int v) { return data_.data() + index(u, v); }
  const T* pixel(int u, int v) const { return data_.data() + index(u, v); }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool operator==(const Raster&) const = default;

 private:
  std::size_t index(int u, int v) const {
    return (static_cast<std::size_t>(v) * width_ + u) * Channels;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

/// 8-bit RGB image as stored on disk.
using Image = Raster<std::uint8_t, 3>;
/// Linear float RGB in [0, 1]; the engine works in this space.
using ImageF = Raster<float, 3>;
/// Single channel float field (coverage, masks).
using FloatMap = Raster<float, 1>;

ImageF to_float(const Image& img);

/// Converts to 8 bits with round-half-away-from-zero; values are clamped to [0, 255].
Image to_8bit(const ImageF& img);

/// 2x2 box filter; odd trailing rows/columns are dropped.
ImageF downsample2x(const ImageF& img);

}  // namespace tiltshift
