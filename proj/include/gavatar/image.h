#pragma once

#include <string>
#include <vector>

namespace gavatar {

/// Interleaved floating-point image, row-major, values nominally in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, int c, double fill = 0.0) : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  double& at(int x, int y, int c = 0) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  double at(int x, int y, int c = 0) const { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  std::size_t size() const { return data.size(); }
  bool same_shape(const Image& o) const { return width == o.width && height == o.height && channels == o.channels; }
};

/// 8-bit PNG (gray or RGB) written with values clamped to [0, 1].
void write_png(const Image& image, const std::string& path);
/// 16-bit gray PNG of value / scale, clamped.
void write_png16(const Image& image, const std::string& path, double scale);
/// Reads gray/RGB(A) 8- or 16-bit PNGs into [0, 1]; alpha is dropped.
Image read_png(const std::string& path);

} // namespace gavatar
