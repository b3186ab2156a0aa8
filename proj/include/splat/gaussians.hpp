// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "splat/math.hpp"

namespace splat {

inline constexpr int kIdFeatureDim = 16;
inline constexpr int kMaxShDegree = 3;

/// Number of SH basis functions per color channel for a degree.
constexpr int sh_basis_count(int degree) { return (degree + 1) * (degree + 1); }

/// Learnable per-Gaussian parameters in structure-of-arrays layout.
///
/// SH coefficients are laid out as [gaussian][basis][channel], so the DC
/// term of Gaussian i occupies sh_coeffs[i * 3 * K + 0..2].
struct GaussianSet {
  int sh_degree = 3;
  std::vector<float> positions;       // 3 per Gaussian
  std::vector<float> rotations;       // 4 per Gaussian, (w, x, y, z)
  std::vector<float> log_scales;      // 3 per Gaussian
  std::vector<float> opacity_logits;  // 1 per Gaussian
  std::vector<float> sh_coeffs;       // 3 * K per Gaussian
  std::vector<float> id_features;     // 16 per Gaussian

  GaussianSet() = default;
  /// Zero-initialized set with identity rotations.
  GaussianSet(std::size_t count, int degree);

  std::size_t size() const { return opacity_logits.size(); }
  bool empty() const { return opacity_logits.empty(); }
  int sh_per_gaussian() const { return 3 * sh_basis_count(sh_degree); }

  Vec3 position(std::size_t i) const {
    return {positions[3 * i], positions[3 * i + 1], positions[3 * i + 2]};
  }
  Quat rotation(std::size_t i) const {
    return {rotations[4 * i], rotations[4 * i + 1], rotations[4 * i + 2], rotations[4 * i + 3]};
  }
  Vec3 log_scale(std::size_t i) const {
    return {log_scales[3 * i], log_scales[3 * i + 1], log_scales[3 * i + 2]};
  }
  float opacity(std::size_t i) const { return sigmoid(opacity_logits[i]); }

  std::span<const float> sh(std::size_t i) const {
    const std::size_t k = sh_per_gaussian();
    return {sh_coeffs.data() + i * k, k};
  }
  std::span<float> sh(std::size_t i) {
    const std::size_t k = sh_per_gaussian();
    return {sh_coeffs.data() + i * k, k};
  }
  std::span<const float> id_feature(std::size_t i) const {
    return {id_features.data() + i * kIdFeatureDim, kIdFeatureDim};
  }

  void set_position(std::size_t i, const Vec3& p);
  void set_rotation(std::size_t i, const Quat& q);
  void set_log_scale(std::size_t i, const Vec3& s);

  /// Throws InvalidArgument if array lengths disagree.
  void validate() const;

  /// Rescales stored quaternions to unit length; ones already unit to within
  /// 1e-6 are left bitwise as they are.
  void renormalize_rotations();

  /// Copy holding only the listed Gaussians, in the given order.
  GaussianSet subset(std::span<const std::size_t> indices) const;
};

}  // namespace splat
