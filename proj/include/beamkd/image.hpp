#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace beamkd {

/// 8-bit interleaved RGB, row-major.
struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;  ///< height * width * 3

  RgbImage() = default;
  RgbImage(int h, int w) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, 0) {}

  std::uint8_t* at(int y, int x) { return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
  const std::uint8_t* at(int y, int x) const {
    return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
  bool empty() const { return height <= 0 || width <= 0; }
};

/// Single channel image with values in [0, 1].
struct GrayImage {
  int height = 0;
  int width = 0;
  std::vector<double> values;

  GrayImage() = default;
  GrayImage(int h, int w, double fill = 0.0)
      : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}

  double& operator()(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
  double operator()(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

/// Format chosen from the extension: .png, .ppm, .jpg/.jpeg (read only).
RgbImage read_image(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const RgbImage& image);
void write_ppm(const std::filesystem::path& path, const RgbImage& image);

}  // namespace beamkd
