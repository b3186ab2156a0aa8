// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace splat {

/// H x W x 3 float image, values nominally in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> rgb;

  Image() = default;
  Image(int w, int h, float fill = 0.0f)
      : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, fill) {}
  std::size_t pixels() const { return static_cast<std::size_t>(width) * height; }
};

inline constexpr std::uint16_t kIgnoreId = 65535;

/// Per-pixel object IDs; 0 is background and 65535 is ignored.
struct IdMap {
  int width = 0;
  int height = 0;
  std::vector<std::uint16_t> ids;
};

/// Dimensions from a PNG header without decoding pixels.
struct PngInfo {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 0;
};
PngInfo read_png_info(const std::filesystem::path& path);

/// Loads an 8- or 16-bit PNG (gray, gray+alpha, RGB or RGBA) as RGB floats.
Image load_image(const std::filesystem::path& path);

/// Writes an 8-bit RGB PNG with value round(255 * clamp(x, 0, 1)).
void save_image(const std::filesystem::path& path, const Image& image);

/// Loads a single-channel ID mask. 16-bit files are read as-is, 8-bit files
/// are widened; anything with more than one channel is rejected.
IdMap load_mask(const std::filesystem::path& path);

/// Writes a 16-bit grayscale PNG.
void save_mask(const std::filesystem::path& path, const IdMap& mask);

/// Bilinear resample to `width` x `height` (pixel-center aligned).
Image resize_bilinear(const Image& image, int width, int height);

/// Peak signal-to-noise ratio in dB for images in [0, 1].
double psnr(const Image& a, const Image& b);

}  // namespace splat
