// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "splat/camera.hpp"
#include "splat/gaussians.hpp"
#include "splat/image_io.hpp"

namespace splat {

/// Layout of a labeled synthetic scene: compact object clusters above a flat
/// background disk, seen from a ring of cameras.
struct SynthSpec {
  int objects = 3;
  int gaussians_per_object = 40;
  int background_gaussians = 60;
  /// Cluster centers; empty means evenly spaced on a circle around the origin.
  std::vector<Vec3> centers;
  float cluster_radius = 0.25f;
  int cameras = 20;
  float ring_radius = 3.0f;
  float elevation_deg = 30.0f;
  int image_size = 64;
  int sh_degree = 1;
  std::uint64_t seed = 0;
  /// Noise magnitude for the points.ply initialization cloud.
  float perturbation = 0.05f;
  /// Probability that a mask pixel is replaced by a different random ID.
  float mask_noise = 0.0f;
  Vec3 background{0.0f, 0.0f, 0.0f};
};

struct SynthScene {
  SynthSpec spec;
  GaussianSet gaussians;
  std::vector<int> labels;  // per Gaussian; 0 = background disk, 1..objects
  std::vector<Camera> cameras;
  std::vector<Vec3> centers;

  int num_classes() const { return spec.objects + 1; }
};

/// Builds the ground-truth scene in memory. Throws InvalidArgument when the
/// spec is degenerate or clusters are closer than 3x their radius.
SynthScene build_synth_scene(const SynthSpec& spec);

/// Ring cameras for `spec`, rotated by `angle_offset` radians.
std::vector<Camera> ring_cameras(const SynthSpec& spec, int count, float angle_offset = 0.0f);

/// Mask by blend-weight argmax over labels; background where the final
/// transmittance exceeds 0.5.
IdMap derive_mask(const GaussianSet& gaussians, const std::vector<int>& labels, int num_labels,
                  const Camera& camera);

/// Replaces a `rate` fraction of pixels with a different random ID.
void add_mask_noise(IdMap& mask, int num_classes, float rate, std::uint64_t seed);

/// Renders images and masks and writes cameras.json, images/, masks/ and
/// points.ply (at perturbed positions) into `dir`.
SynthScene generate_synth(const SynthSpec& spec, const std::filesystem::path& dir);

/// Diagonal of the axis-aligned bounding box of the positions.
float scene_extent(const GaussianSet& gaussians);

/// Seeded Gaussian noise: positions by magnitude * extent, SH DC and log
/// scales by magnitude. Other fields are copied.
GaussianSet perturb(const GaussianSet& gaussians, float magnitude, std::uint64_t seed);

}  // namespace splat
