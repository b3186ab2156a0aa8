// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>

#include "splat/camera.hpp"
#include "splat/math.hpp"

namespace splat {

inline constexpr float kDefaultNearPlane = 0.01f;
/// Added to both diagonal entries of the screen-space covariance.
inline constexpr float kLowPassVariance = 0.3f;

enum class ProjectionStatus { kVisible, kBehindNearPlane, kDegenerate, kOffscreen };

struct ProjectedGaussian {
  Vec2 mean2d;
  Mat2 cov2d;     // includes the low-pass term
  Mat2 conic;     // inverse of cov2d
  float depth = 0.0f;
  Mat23 jacobian;
  Vec3 camera_position;
  /// Half-size in pixels of the square footprint used for culling and tiling.
  float radius = 0.0f;
};

/// EWA projection of a 3D Gaussian. Returns nullopt when the Gaussian is
/// behind the near plane, the projected covariance is degenerate, or the
/// `footprint_sigmas`-sigma square misses the image.
std::optional<ProjectedGaussian> project_gaussian(const Vec3& position, const Mat3& covariance,
                                                  const Camera& camera,
                                                  float near_plane = kDefaultNearPlane,
                                                  float footprint_sigmas = 3.0f,
                                                  ProjectionStatus* status = nullptr);

/// Screen covariance J W Sigma W^T J^T without the low-pass term. Does not cull.
Mat2 projected_covariance(const Vec3& position, const Mat3& covariance, const Camera& camera);

struct ProjectionGrad {
  Vec3 position = Vec3::Zero();
  Mat3 covariance = Mat3::Zero();
};

/// Chains gradients on mean2d and cov2d back to world position and the 3D
/// covariance. `grad_cov2d` is taken as a full (symmetric) matrix gradient.
ProjectionGrad project_gaussian_backward(const Vec3& position, const Mat3& covariance,
                                         const Camera& camera, const Vec2& grad_mean2d,
                                         const Mat2& grad_cov2d);

}  // namespace splat
