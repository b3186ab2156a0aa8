// SPDX-License-Identifier: Apache-2.0
#include "splat/gaussians.hpp"

#include <cmath>
#include <string>

#include <fmt/format.h>

#include "splat/error.hpp"

namespace splat {

GaussianSet::GaussianSet(std::size_t count, int degree)
    : sh_degree(degree),
      positions(3 * count, 0.0f),
      rotations(4 * count, 0.0f),
      log_scales(3 * count, 0.0f),
      opacity_logits(count, 0.0f),
      sh_coeffs(count * 3 * sh_basis_count(degree), 0.0f),
      id_features(count * kIdFeatureDim, 0.0f) {
  if (degree < 0 || degree > kMaxShDegree) {
    throw InvalidArgument(fmt::format("SH degree {} outside 0..{}", degree, kMaxShDegree));
  }
  for (std::size_t i = 0; i < count; ++i) rotations[4 * i] = 1.0f;
}

void GaussianSet::set_position(std::size_t i, const Vec3& p) {
  for (int k = 0; k < 3; ++k) positions[3 * i + k] = p[k];
}

void GaussianSet::set_rotation(std::size_t i, const Quat& q) {
  for (int k = 0; k < 4; ++k) rotations[4 * i + k] = q[k];
}

void GaussianSet::set_log_scale(std::size_t i, const Vec3& s) {
  for (int k = 0; k < 3; ++k) log_scales[3 * i + k] = s[k];
}

void GaussianSet::validate() const {
  if (sh_degree < 0 || sh_degree > kMaxShDegree) {
    throw InvalidArgument(fmt::format("SH degree {} outside 0..{}", sh_degree, kMaxShDegree));
  }
  const std::size_t n = size();
  auto check = [n](const char* name, std::size_t len, std::size_t per) {
    if (len != n * per) {
      throw InvalidArgument(
          fmt::format("GaussianSet.{} has {} values, expected {} x {}", name, len, n, per));
    }
  };
  check("positions", positions.size(), 3);
  check("rotations", rotations.size(), 4);
  check("log_scales", log_scales.size(), 3);
  check("sh_coeffs", sh_coeffs.size(), static_cast<std::size_t>(sh_per_gaussian()));
  check("id_features", id_features.size(), kIdFeatureDim);
}

void GaussianSet::renormalize_rotations() {
  for (std::size_t i = 0; i < size(); ++i) {
    float* q = &rotations[4 * i];
    const float norm = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
    if (std::abs(norm - 1.0f) <= 1e-6f) continue;
    if (norm > 0.0f) {
      for (int k = 0; k < 4; ++k) q[k] /= norm;
    } else {
      q[0] = 1.0f;
    }
  }
}

GaussianSet GaussianSet::subset(std::span<const std::size_t> indices) const {
  GaussianSet out(indices.size(), sh_degree);
  const std::size_t k = sh_per_gaussian();
  for (std::size_t j = 0; j < indices.size(); ++j) {
    const std::size_t i = indices[j];
    std::copy_n(&positions[3 * i], 3, &out.positions[3 * j]);
    std::copy_n(&rotations[4 * i], 4, &out.rotations[4 * j]);
    std::copy_n(&log_scales[3 * i], 3, &out.log_scales[3 * j]);
    out.opacity_logits[j] = opacity_logits[i];
    std::copy_n(&sh_coeffs[k * i], k, &out.sh_coeffs[k * j]);
    std::copy_n(&id_features[kIdFeatureDim * i], kIdFeatureDim,
                &out.id_features[kIdFeatureDim * j]);
  }
  return out;
}

}  // namespace splat
