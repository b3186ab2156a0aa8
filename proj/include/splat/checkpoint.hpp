// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>

#include "splat/classifier.hpp"
#include "splat/gaussians.hpp"

namespace splat {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TrainingMetadata {
  std::uint64_t iterations = 0;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
};

/// Trained scene. `classifier.num_classes` may be 0 when no masks were used.
struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  GaussianSet gaussians;
  Classifier classifier;
  TrainingMetadata metadata;
};

/// Little-endian binary layout:
///   "SSPL", u32 version, u64 N, u32 sh_degree, u32 num_classes,
///   then positions, rotations, log_scales, opacity_logits, sh_coeffs,
///   id_features, classifier weights, classifier bias, each as u64 count
///   followed by f32 values, then u64 iterations, u64 seed, u64 config_hash.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Exact serialized size in bytes.
std::uint64_t checkpoint_size(const Checkpoint& checkpoint);

}  // namespace splat
