// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "splat/camera.hpp"
#include "splat/image_io.hpp"
#include "splat/ply.hpp"

namespace splat {

struct Frame {
  std::string name;
  Camera camera;
  std::filesystem::path image_path;
  std::optional<std::filesystem::path> mask_path;
};

/// A posed image collection. Pixels are loaded on demand with load_frames.
struct SceneData {
  std::string name;
  std::filesystem::path root;
  int width = 0;
  int height = 0;
  std::vector<Frame> frames;  // sorted by name
  std::optional<PointCloud> points;
  std::vector<std::string> warnings;

  bool has_masks() const;
};

/// Parses `dir/cameras.json`, checks every image and mask header, and reads
/// `points.ply` when present. Throws DataError on any inconsistency.
SceneData load_scene(const std::filesystem::path& dir);

struct FramePixels {
  std::vector<Image> images;
  std::vector<IdMap> masks;  // empty when the scene has no masks
  int num_classes = 0;       // 1 + max mask ID, 0 without masks
};

/// Decodes every image (and mask) of the scene in frame order.
FramePixels load_frames(const SceneData& scene);

/// 1 + the largest non-ignore ID across masks; throws DataError above 256.
int count_classes(const std::vector<IdMap>& masks);

/// Writes cameras.json for `frames` (names and intrinsics only).
void write_cameras_json(const std::filesystem::path& path, const std::vector<Frame>& frames);

/// Image file name for frame `index`, e.g. frame_0004.png.
std::string frame_file_name(int index);

}  // namespace splat
