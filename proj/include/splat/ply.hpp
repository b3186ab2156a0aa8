// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <vector>

namespace splat {

struct PointCloud {
  std::vector<float> positions;  // 3 per point
  std::vector<float> colors;     // 3 per point in [0, 1]; mid-gray when absent in the file
  bool has_colors = false;

  std::size_t size() const { return positions.size() / 3; }
};

/// Reads the `vertex` element of an ascii or binary_little_endian PLY file.
/// Requires x, y, z; red, green, blue are optional (uchar scaled by 1/255,
/// float taken as-is). Other elements are skipped.
PointCloud load_ply(const std::filesystem::path& path);

/// Writes x, y, z as float and, when present, red, green, blue as uchar.
void save_ply(const std::filesystem::path& path, const PointCloud& cloud, bool binary);

}  // namespace splat
