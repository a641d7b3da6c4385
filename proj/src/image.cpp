#include "tiltshift/image.hpp"

#include <algorithm>
#include <cmath>

namespace tiltshift {

ImageF to_float(const Image& img) {
  ImageF out(img.width(), img.height());
  const auto& src = img.data();
  auto& dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<float>(src[i]) / 255.0f;
  return out;
}

Image to_8bit(const ImageF& img) {
  Image out(img.width(), img.height());
  const auto& src = img.data();
  auto& dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double scaled = std::clamp(static_cast<double>(src[i]) * 255.0, 0.0, 255.0);
    dst[i] = static_cast<std::uint8_t>(std::round(scaled));
  }
  return out;
}

ImageF downsample2x(const ImageF& img) {
  ImageF out(img.width() / 2, img.height() / 2);
  for (int v = 0; v < out.height(); ++v) {
    for (int u = 0; u < out.width(); ++u) {
      for (int c = 0; c < 3; ++c) {
        out.at(u, v, c) = 0.25f * (img.at(2 * u, 2 * v, c) + img.at(2 * u + 1, 2 * v, c) +
                                   img.at(2 * u, 2 * v + 1, c) + img.at(2 * u + 1, 2 * v + 1, c));
      }
    }
  }
  return out;
}

}  // namespace tiltshift
