// SPDX-License-Identifier: Apache-2.0
#include "splat/scene_io.hpp"

#include <algorithm>
#include <fstream>

#include <fmt/format.h>
#include "json.hpp"

#include "splat/error.hpp"

namespace splat {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr float kLoadOrthonormalTolerance = 1e-3f;
constexpr int kMaxClasses = 256;

Camera parse_camera(const json& frame, int width, int height, const std::string& name) {
  Camera cam;
  cam.width = width;
  cam.height = height;
  cam.fx = frame.at("fx").get<float>();
  cam.fy = frame.at("fy").get<float>();
  cam.cx = frame.at("cx").get<float>();
  cam.cy = frame.at("cy").get<float>();
  const auto& m = frame.at("world_to_camera");
  if (!m.is_array() || m.size() != 16) {
    throw DataError(fmt::format("{}: world_to_camera must hold 16 numbers", name));
  }
  for (std::size_t i = 0; i < 16; ++i) cam.world_to_camera[i] = m[i].get<float>();
  try {
    cam.validate(kLoadOrthonormalTolerance);
  } catch (const InvalidArgument& e) {
    throw DataError(fmt::format("{}: {}", name, e.what()));
  }
  return cam;
}

}  // namespace

bool SceneData::has_masks() const {
  return !frames.empty() &&
         std::all_of(frames.begin(), frames.end(), [](const Frame& f) { return f.mask_path; });
}

std::string frame_file_name(int index) { return fmt::format("frame_{:04d}.png", index); }

SceneData load_scene(const fs::path& dir) {
  const fs::path cameras_path = dir / "cameras.json";
  if (!fs::is_directory(dir)) {
    throw DataError(fmt::format("scene directory {} does not exist", dir.string()));
  }
  if (!fs::exists(cameras_path)) {
    throw DataError(fmt::format("{}: missing cameras.json", dir.string()));
  }
  json doc;
  try {
    std::ifstream in(cameras_path);
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(fmt::format("{}: {}", cameras_path.string(), e.what()));
  }

  SceneData scene;
  scene.root = dir;
  scene.name = dir.filename().string();
  if (scene.name.empty()) scene.name = dir.parent_path().filename().string();
  try {
    scene.width = doc.at("width").get<int>();
    scene.height = doc.at("height").get<int>();
    for (const auto& f : doc.at("frames")) {
      Frame frame;
      frame.name = f.at("name").get<std::string>();
      frame.camera = parse_camera(f, scene.width, scene.height, frame.name);
      scene.frames.push_back(std::move(frame));
    }
  } catch (const json::exception& e) {
    throw DataError(fmt::format("{}: {}", cameras_path.string(), e.what()));
  }
  if (scene.frames.empty()) throw DataError(fmt::format("{}: no frames", cameras_path.string()));
  std::sort(scene.frames.begin(), scene.frames.end(),
            [](const Frame& a, const Frame& b) { return a.name < b.name; });
  for (std::size_t i = 1; i < scene.frames.size(); ++i) {
    if (scene.frames[i].name == scene.frames[i - 1].name) {
      throw DataError(fmt::format("duplicate frame name {}", scene.frames[i].name));
    }
  }

  const bool masks_dir = fs::is_directory(dir / "masks");
  for (Frame& frame : scene.frames) {
    const std::string file = frame.name + ".png";
    frame.image_path = dir / "images" / file;
    if (!fs::exists(frame.image_path)) {
      throw DataError(fmt::format("{}: missing image {}", frame.name, frame.image_path.string()));
    }
    const PngInfo info = read_png_info(frame.image_path);
    if (info.width != scene.width || info.height != scene.height) {
      throw DataError(fmt::format("{}: image {}×{} vs dataset {}×{}", frame.name, info.width,
                                  info.height, scene.width, scene.height));
    }
    if (!masks_dir) continue;
    const fs::path mask = dir / "masks" / file;
    if (!fs::exists(mask)) {
      scene.warnings.push_back(fmt::format("{}: no mask", frame.name));
      continue;
    }
    const PngInfo mi = read_png_info(mask);
    if (mi.width != info.width || mi.height != info.height) {
      throw DataError(fmt::format("{}: mask {}×{} vs image {}×{}", frame.name, mi.width,
                                  mi.height, info.width, info.height));
    }
    if (mi.channels != 1) {
      throw DataError(fmt::format("{}: mask must be single-channel, found {} channels",
                                  frame.name, mi.channels));
    }
    frame.mask_path = mask;
  }
  if (masks_dir && !scene.has_masks()) {
    scene.warnings.push_back("masks/ is incomplete; mask supervision disabled");
  }

  if (fs::exists(dir / "points.ply")) scene.points = load_ply(dir / "points.ply");
  return scene;
}

int count_classes(const std::vector<IdMap>& masks) {
  int max_id = -1;
  for (const auto& m : masks) {
    for (auto id : m.ids) {
      if (id != kIgnoreId) max_id = std::max(max_id, static_cast<int>(id));
    }
  }
  if (max_id < 0) return masks.empty() ? 0 : 1;
  if (max_id + 1 > kMaxClasses) {
    throw DataError(fmt::format("mask ID {} exceeds the {}-class limit", max_id, kMaxClasses));
  }
  return max_id + 1;
}

FramePixels load_frames(const SceneData& scene) {
  FramePixels out;
  const bool masks = scene.has_masks();
  for (const Frame& f : scene.frames) {
    out.images.push_back(load_image(f.image_path));
    if (masks) out.masks.push_back(load_mask(*f.mask_path));
  }
  out.num_classes = masks ? count_classes(out.masks) : 0;
  return out;
}

void write_cameras_json(const fs::path& path, const std::vector<Frame>& frames) {
  if (frames.empty()) throw InvalidArgument("cannot write cameras.json without frames");
  json doc;
  doc["width"] = frames.front().camera.width;
  doc["height"] = frames.front().camera.height;
  json list = json::array();
  for (const Frame& f : frames) {
    json j;
    j["name"] = f.name;
    j["fx"] = f.camera.fx;
    j["fy"] = f.camera.fy;
    j["cx"] = f.camera.cx;
    j["cy"] = f.camera.cy;
    j["world_to_camera"] = f.camera.world_to_camera;
    list.push_back(std::move(j));
  }
  doc["frames"] = std::move(list);
  std::ofstream out(path);
  if (!out) throw DataError(fmt::format("cannot write {}", path.string()));
  out << doc.dump(2) << '\n';
}

}  // namespace splat
