// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>

#include "splat/math.hpp"

namespace splat {

/// Pinhole camera with a rigid world-to-camera transform.
///
/// Camera space looks down +z with +x right and +y down the image.
struct Camera {
  int width = 0;
  int height = 0;
  float fx = 1.0f;
  float fy = 1.0f;
  float cx = 0.0f;
  float cy = 0.0f;
  std::array<float, 16> world_to_camera{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};

  Mat3 rotation() const;
  Vec3 translation() const;
  /// Camera center in world coordinates.
  Vec3 center() const;

  Vec3 to_camera(const Vec3& world) const { return rotation() * world + translation(); }

  /// Throws InvalidArgument when intrinsics or the rotation block are invalid.
  void validate(float orthonormal_tolerance = 1e-5f) const;

  /// Camera at `eye` looking at `target`, with `up` roughly opposing image +y.
  static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, int width,
                        int height, float focal);
};

}  // namespace splat
