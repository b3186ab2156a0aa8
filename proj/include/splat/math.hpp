// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

namespace splat {

using Vec2 = Eigen::Vector2f;
using Vec3 = Eigen::Vector3f;
using Vec4 = Eigen::Vector4f;
using Mat2 = Eigen::Matrix2f;
using Mat3 = Eigen::Matrix3f;
using Mat4 = Eigen::Matrix4f;
using Mat23 = Eigen::Matrix<float, 2, 3>;

/// Quaternion stored as (w, x, y, z).
using Quat = Eigen::Vector4f;

inline float sigmoid(float x) { return 1.0f / (1.0f + std::exp(-x)); }

inline float inverse_sigmoid(float p) { return std::log(p / (1.0f - p)); }

}  // namespace splat
