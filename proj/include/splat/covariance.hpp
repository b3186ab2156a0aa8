// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "splat/math.hpp"

namespace splat {

/// Rotation matrix of a quaternion (w, x, y, z); the input need not be unit.
Mat3 rotation_matrix(const Quat& q);

/// Sigma = R S S^T R^T with S = diag(exp(log_scale)). The quaternion is
/// normalized internally.
Mat3 build_covariance(const Quat& rotation, const Vec3& log_scale);

struct CovarianceGrad {
  Quat rotation = Quat::Zero();
  Vec3 log_scale = Vec3::Zero();
};

/// Gradient of <upstream, build_covariance(rotation, log_scale)> with
/// respect to the raw (unnormalized) quaternion and the log scales.
CovarianceGrad build_covariance_backward(const Mat3& upstream, const Quat& rotation,
                                         const Vec3& log_scale);

}  // namespace splat
