// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>

#include "splat/math.hpp"

namespace splat {

inline constexpr float kShC0 = 0.28209479177387814f;

/// View-dependent color 0.5 + sum_lm c_lm Y_lm(dir), clamped below at zero.
/// `coeffs` is [basis][channel] with (degree + 1)^2 basis entries.
Vec3 eval_sh(std::span<const float> coeffs, const Vec3& dir, int degree);

/// Backward of eval_sh. Writes d(<upstream, rgb>)/d(coeffs) into
/// `grad_coeffs` (same layout as coeffs) and returns the gradient with
/// respect to `dir`, treating its components as independent.
Vec3 eval_sh_backward(std::span<const float> coeffs, const Vec3& dir, int degree,
                      const Vec3& upstream, std::span<float> grad_coeffs);

/// Real SH basis values for `dir` up to `degree`; writes (degree+1)^2 values.
void sh_basis(const Vec3& dir, int degree, std::span<float> out);

/// DC coefficient producing `rgb` under the 0.5-offset convention.
inline float rgb_to_sh_dc(float rgb) { return (rgb - 0.5f) / kShC0; }

}  // namespace splat
