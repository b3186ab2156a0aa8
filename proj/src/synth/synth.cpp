// SPDX-License-Identifier: Apache-2.0
#include "splat/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include <fmt/format.h>

#include "splat/error.hpp"
#include "splat/ply.hpp"
#include "splat/raster.hpp"
#include "splat/scene_io.hpp"
#include "splat/sh.hpp"

namespace splat {
namespace fs = std::filesystem;

namespace {

constexpr std::array<std::array<float, 3>, 8> kPalette{{{0.90f, 0.20f, 0.20f},
                                                       {0.20f, 0.80f, 0.30f},
                                                       {0.20f, 0.35f, 0.90f},
                                                       {0.90f, 0.85f, 0.20f},
                                                       {0.85f, 0.25f, 0.85f},
                                                       {0.20f, 0.85f, 0.85f},
                                                       {0.95f, 0.55f, 0.15f},
                                                       {0.55f, 0.30f, 0.15f}}};
constexpr float kDiskHeight = -0.9f;

std::vector<Vec3> default_centers(int objects, float radius) {
  if (objects == 1) return {Vec3::Zero()};
  const float spacing = 3.15f * radius;
  const float ring = std::max(0.6f, spacing / (2.0f * std::sin(std::numbers::pi_v<float> / objects)));
  std::vector<Vec3> out;
  for (int k = 0; k < objects; ++k) {
    const float a = 2.0f * std::numbers::pi_v<float> * k / objects;
    out.emplace_back(ring * std::cos(a), ring * std::sin(a), 0.0f);
  }
  return out;
}

void validate(const SynthSpec& spec) {
  if (spec.objects < 1) throw InvalidArgument("synthetic scene needs at least one object");
  if (spec.objects > 255) throw InvalidArgument("at most 255 objects are supported");
  if (spec.gaussians_per_object < 1 || spec.background_gaussians < 0) {
    throw InvalidArgument("Gaussian counts must be positive");
  }
  if (spec.cameras < 1 || spec.image_size < 8) {
    throw InvalidArgument("need at least one camera and images of at least 8 px");
  }
  if (!(spec.cluster_radius > 0.0f) || !(spec.ring_radius > 0.0f)) {
    throw InvalidArgument("cluster and ring radii must be positive");
  }
  if (spec.sh_degree < 0 || spec.sh_degree > kMaxShDegree) {
    throw InvalidArgument(fmt::format("SH degree {} outside 0..{}", spec.sh_degree, kMaxShDegree));
  }
  if (!spec.centers.empty() && static_cast<int>(spec.centers.size()) != spec.objects) {
    throw InvalidArgument("one center per object is required");
  }
  if (spec.mask_noise < 0.0f || spec.mask_noise > 1.0f) {
    throw InvalidArgument("mask noise rate must lie in [0, 1]");
  }
}

}  // namespace

std::vector<Camera> ring_cameras(const SynthSpec& spec, int count, float angle_offset) {
  std::vector<Camera> out;
  const float elev = spec.elevation_deg * std::numbers::pi_v<float> / 180.0f;
  const Vec3 target(0.0f, 0.0f, -0.1f);
  const float focal = 1.1f * static_cast<float>(spec.image_size);
  for (int k = 0; k < count; ++k) {
    const float a = angle_offset + 2.0f * std::numbers::pi_v<float> * k / count;
    const Vec3 eye(spec.ring_radius * std::cos(a) * std::cos(elev),
                   spec.ring_radius * std::sin(a) * std::cos(elev),
                   spec.ring_radius * std::sin(elev));
    out.push_back(Camera::look_at(eye, target, Vec3(0, 0, 1), spec.image_size, spec.image_size,
                                  focal));
  }
  return out;
}

SynthScene build_synth_scene(const SynthSpec& spec) {
  validate(spec);
  SynthScene scene;
  scene.spec = spec;
  scene.centers = spec.centers.empty() ? default_centers(spec.objects, spec.cluster_radius)
                                       : spec.centers;
  for (std::size_t a = 0; a < scene.centers.size(); ++a) {
    for (std::size_t b = a + 1; b < scene.centers.size(); ++b) {
      const float d = (scene.centers[a] - scene.centers[b]).norm();
      if (d < 3.0f * spec.cluster_radius) {
        throw InvalidArgument(fmt::format(
            "objects {} and {} are {:.3f} apart; clusters need at least 3x radius ({:.3f})", a + 1,
            b + 1, d, 3.0f * spec.cluster_radius));
      }
    }
  }

  const std::size_t n_obj = static_cast<std::size_t>(spec.objects) * spec.gaussians_per_object;
  const std::size_t n = n_obj + spec.background_gaussians;
  GaussianSet& g = scene.gaussians;
  g = GaussianSet(n, spec.sh_degree);
  scene.labels.assign(n, 0);

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<float> unit(0.0f, 1.0f);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  const int k = sh_basis_count(spec.sh_degree);

  auto set_color = [&](std::size_t i, const Vec3& rgb, float jitter) {
    auto sh = g.sh(i);
    for (int c = 0; c < 3; ++c) {
      sh[c] = rgb_to_sh_dc(std::clamp(rgb[c] + jitter * normal(rng), 0.05f, 0.95f));
    }
    for (int b = 1; b < k; ++b)
      for (int c = 0; c < 3; ++c) sh[3 * b + c] = 0.03f * normal(rng);
  };

  std::size_t i = 0;
  for (int obj = 0; obj < spec.objects; ++obj) {
    const auto& pal = kPalette[obj % kPalette.size()];
    const Vec3 base(pal[0], pal[1], pal[2]);
    for (int j = 0; j < spec.gaussians_per_object; ++j, ++i) {
      Vec3 offset;
      do {
        offset = Vec3(2 * unit(rng) - 1, 2 * unit(rng) - 1, 2 * unit(rng) - 1);
      } while (offset.squaredNorm() > 1.0f);
      g.set_position(i, scene.centers[obj] + spec.cluster_radius * offset);
      g.set_rotation(i, Quat(normal(rng), normal(rng), normal(rng), normal(rng)).normalized());
      g.set_log_scale(i, Vec3(std::log(0.07f + 0.05f * unit(rng)), std::log(0.07f + 0.05f * unit(rng)),
                              std::log(0.07f + 0.05f * unit(rng))));
      g.opacity_logits[i] = 1.5f + 1.5f * unit(rng);
      set_color(i, base, 0.12f);
      scene.labels[i] = obj + 1;
    }
  }
  float disk = 0.0f;
  for (const Vec3& c : scene.centers) disk = std::max(disk, c.head<2>().norm());
  disk += 2.5f * spec.cluster_radius;
  for (int j = 0; j < spec.background_gaussians; ++j, ++i) {
    const float r = disk * std::sqrt(unit(rng));
    const float a = 2.0f * std::numbers::pi_v<float> * unit(rng);
    g.set_position(i, Vec3(r * std::cos(a), r * std::sin(a), kDiskHeight));
    const float yaw = std::numbers::pi_v<float> * unit(rng);
    g.set_rotation(i, Quat(std::cos(0.5f * yaw), 0.0f, 0.0f, std::sin(0.5f * yaw)));
    const float spread = disk / std::sqrt(static_cast<float>(spec.background_gaussians));
    g.set_log_scale(i, Vec3(std::log(spread * (0.8f + 0.4f * unit(rng))),
                            std::log(spread * (0.8f + 0.4f * unit(rng))), std::log(0.01f)));
    g.opacity_logits[i] = 2.0f + unit(rng);
    set_color(i, (j % 2 == 0) ? Vec3(0.75f, 0.75f, 0.7f) : Vec3(0.3f, 0.3f, 0.35f), 0.05f);
    scene.labels[i] = 0;
  }
  scene.cameras = ring_cameras(spec, spec.cameras);
  return scene;
}

IdMap derive_mask(const GaussianSet& gaussians, const std::vector<int>& labels, int num_labels,
                  const Camera& camera) {
  std::vector<float> onehot(gaussians.size() * num_labels, 0.0f);
  for (std::size_t i = 0; i < gaussians.size(); ++i) onehot[i * num_labels + labels[i]] = 1.0f;
  const std::size_t pixels = static_cast<std::size_t>(camera.width) * camera.height;
  std::vector<float> weights(pixels * num_labels), trans(pixels);
  const std::vector<float> zero(num_labels, 0.0f);
  render_channels(gaussians, camera, onehot, num_labels, zero, weights, trans);

  IdMap mask;
  mask.width = camera.width;
  mask.height = camera.height;
  mask.ids.assign(pixels, 0);
  for (std::size_t p = 0; p < pixels; ++p) {
    if (trans[p] > 0.5f) continue;
    const float* w = &weights[p * num_labels];
    mask.ids[p] = static_cast<std::uint16_t>(std::max_element(w, w + num_labels) - w);
  }
  return mask;
}

void add_mask_noise(IdMap& mask, int num_classes, float rate, std::uint64_t seed) {
  if (rate <= 0.0f || num_classes < 2) return;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> unit(0.0f, 1.0f);
  std::uniform_int_distribution<int> other(1, num_classes - 1);
  for (auto& id : mask.ids) {
    if (id == kIgnoreId || unit(rng) >= rate) continue;
    id = static_cast<std::uint16_t>((id + other(rng)) % num_classes);
  }
}

SynthScene generate_synth(const SynthSpec& spec, const fs::path& dir) {
  SynthScene scene = build_synth_scene(spec);
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");

  std::vector<Frame> frames;
  for (std::size_t v = 0; v < scene.cameras.size(); ++v) {
    const Camera& cam = scene.cameras[v];
    const std::string file = frame_file_name(static_cast<int>(v));
    const RenderOutput r = render_color(scene.gaussians, cam, spec.background);
    Image img(cam.width, cam.height);
    img.rgb = r.color;
    save_image(dir / "images" / file, img);

    IdMap mask = derive_mask(scene.gaussians, scene.labels, scene.num_classes(), cam);
    add_mask_noise(mask, scene.num_classes(), spec.mask_noise, spec.seed * 7919 + v);
    save_mask(dir / "masks" / file, mask);

    Frame f;
    f.name = file.substr(0, file.size() - 4);
    f.camera = cam;
    frames.push_back(std::move(f));
  }
  write_cameras_json(dir / "cameras.json", frames);

  const GaussianSet noisy = perturb(scene.gaussians, spec.perturbation, spec.seed + 1);
  PointCloud cloud;
  cloud.has_colors = true;
  cloud.positions = noisy.positions;
  cloud.colors.resize(noisy.positions.size());
  for (std::size_t i = 0; i < noisy.size(); ++i) {
    for (int c = 0; c < 3; ++c) {
      cloud.colors[3 * i + c] = std::clamp(0.5f + kShC0 * scene.gaussians.sh(i)[c], 0.0f, 1.0f);
    }
  }
  save_ply(dir / "points.ply", cloud, true);
  return scene;
}

float scene_extent(const GaussianSet& gaussians) {
  if (gaussians.empty()) return 0.0f;
  Vec3 lo = gaussians.position(0), hi = lo;
  for (std::size_t i = 1; i < gaussians.size(); ++i) {
    lo = lo.cwiseMin(gaussians.position(i));
    hi = hi.cwiseMax(gaussians.position(i));
  }
  return (hi - lo).norm();
}

GaussianSet perturb(const GaussianSet& gaussians, float magnitude, std::uint64_t seed) {
  GaussianSet out = gaussians;
  if (magnitude == 0.0f) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  const float extent = scene_extent(gaussians);
  const int k = gaussians.sh_per_gaussian();
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (int c = 0; c < 3; ++c) out.positions[3 * i + c] += magnitude * extent * normal(rng);
    for (int c = 0; c < 3; ++c) out.sh_coeffs[i * k + c] += magnitude * normal(rng);
    for (int c = 0; c < 3; ++c) out.log_scales[3 * i + c] += magnitude * normal(rng);
  }
  return out;
}

}  // namespace splat
