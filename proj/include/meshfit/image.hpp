#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace meshfit {

/// Row-major H x W x C image, values in [0, 1], 64-bit throughout.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 (gray) or 3 (rgb)
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, int c) : width(w), height(h), channels(c),
                               data(static_cast<std::size_t>(w) * h * c, 0.0) {}

  double& at(int row, int col, int ch) {
    return data[(static_cast<std::size_t>(row) * width + col) * channels + ch];
  }
  double at(int row, int col, int ch) const {
    return data[(static_cast<std::size_t>(row) * width + col) * channels + ch];
  }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
};

/// 8-bit PNG decode; any color type is expanded to gray or rgb.
Image read_png(const std::filesystem::path& path);

/// 8-bit PNG encode, channels decide gray vs rgb. Values clamped to [0,1].
void write_png(const std::filesystem::path& path, const Image& img);

Image resize_bilinear(const Image& src, int width, int height);
Image resize_nearest(const Image& src, int width, int height);

/// Any channel >= 0.5 counts as foreground; returns H*W doubles in {0,1}.
std::vector<double> binarize_mask(const Image& mask);

}  // namespace meshfit
