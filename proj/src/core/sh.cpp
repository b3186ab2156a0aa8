// SPDX-License-Identifier: Apache-2.0
#include "splat/sh.hpp"

#include <array>

#include <fmt/format.h>

#include "splat/error.hpp"
#include "splat/gaussians.hpp"

namespace splat {
namespace {

constexpr float kC1 = 0.4886025119029199f;
constexpr float kC2a = 1.0925484305920792f;
constexpr float kC2b = 0.31539156525252005f;
constexpr float kC2c = 0.5462742152960396f;
constexpr float kC3a = -0.5900435899266435f;
constexpr float kC3b = 2.890611442640554f;
constexpr float kC3c = -0.4570457994644658f;
constexpr float kC3d = 0.3731763325901154f;
constexpr float kC3e = 1.445305721320277f;

constexpr int kMaxBasis = sh_basis_count(kMaxShDegree);

void check_count(std::span<const float> coeffs, int degree) {
  if (degree < 0 || degree > kMaxShDegree) {
    throw InvalidArgument(fmt::format("SH degree {} outside 0..{}", degree, kMaxShDegree));
  }
  const std::size_t expected = 3 * static_cast<std::size_t>(sh_basis_count(degree));
  if (coeffs.size() != expected) {
    throw InvalidArgument(fmt::format("SH degree {} needs {} coefficients, got {}", degree,
                                      expected, coeffs.size()));
  }
}

// Basis values and their partial derivatives with respect to x, y, z.
void basis_with_gradient(const Vec3& d, int degree, float* value, Vec3* grad) {
  const float x = d.x(), y = d.y(), z = d.z();
  value[0] = kShC0;
  grad[0] = Vec3::Zero();
  if (degree < 1) return;
  value[1] = -kC1 * y;
  grad[1] = {0.0f, -kC1, 0.0f};
  value[2] = kC1 * z;
  grad[2] = {0.0f, 0.0f, kC1};
  value[3] = -kC1 * x;
  grad[3] = {-kC1, 0.0f, 0.0f};
  if (degree < 2) return;
  const float xx = x * x, yy = y * y, zz = z * z;
  value[4] = kC2a * x * y;
  grad[4] = {kC2a * y, kC2a * x, 0.0f};
  value[5] = -kC2a * y * z;
  grad[5] = {0.0f, -kC2a * z, -kC2a * y};
  value[6] = kC2b * (2.0f * zz - xx - yy);
  grad[6] = {-2.0f * kC2b * x, -2.0f * kC2b * y, 4.0f * kC2b * z};
  value[7] = -kC2a * x * z;
  grad[7] = {-kC2a * z, 0.0f, -kC2a * x};
  value[8] = kC2c * (xx - yy);
  grad[8] = {2.0f * kC2c * x, -2.0f * kC2c * y, 0.0f};
  if (degree < 3) return;
  value[9] = kC3a * y * (3.0f * xx - yy);
  grad[9] = {6.0f * kC3a * x * y, kC3a * (3.0f * xx - 3.0f * yy), 0.0f};
  value[10] = kC3b * x * y * z;
  grad[10] = {kC3b * y * z, kC3b * x * z, kC3b * x * y};
  value[11] = kC3c * y * (4.0f * zz - xx - yy);
  grad[11] = {-2.0f * kC3c * x * y, kC3c * (4.0f * zz - xx - 3.0f * yy), 8.0f * kC3c * y * z};
  value[12] = kC3d * z * (2.0f * zz - 3.0f * xx - 3.0f * yy);
  grad[12] = {-6.0f * kC3d * x * z, -6.0f * kC3d * y * z,
              kC3d * (6.0f * zz - 3.0f * xx - 3.0f * yy)};
  value[13] = kC3c * x * (4.0f * zz - xx - yy);
  grad[13] = {kC3c * (4.0f * zz - 3.0f * xx - yy), -2.0f * kC3c * x * y, 8.0f * kC3c * x * z};
  value[14] = kC3e * z * (xx - yy);
  grad[14] = {2.0f * kC3e * x * z, -2.0f * kC3e * y * z, kC3e * (xx - yy)};
  value[15] = kC3a * x * (xx - 3.0f * yy);
  grad[15] = {kC3a * (3.0f * xx - 3.0f * yy), -6.0f * kC3a * x * y, 0.0f};
}

}  // namespace

void sh_basis(const Vec3& dir, int degree, std::span<float> out) {
  std::array<float, kMaxBasis> value{};
  std::array<Vec3, kMaxBasis> grad;
  basis_with_gradient(dir, degree, value.data(), grad.data());
  const int n = sh_basis_count(degree);
  for (int i = 0; i < n && i < static_cast<int>(out.size()); ++i) out[i] = value[i];
}

Vec3 eval_sh(std::span<const float> coeffs, const Vec3& dir, int degree) {
  check_count(coeffs, degree);
  std::array<float, kMaxBasis> value{};
  std::array<Vec3, kMaxBasis> grad;
  basis_with_gradient(dir, degree, value.data(), grad.data());
  Vec3 rgb = Vec3::Constant(0.5f);
  const int n = sh_basis_count(degree);
  for (int b = 0; b < n; ++b) {
    for (int c = 0; c < 3; ++c) rgb[c] += value[b] * coeffs[3 * b + c];
  }
  return rgb.cwiseMax(0.0f);
}

Vec3 eval_sh_backward(std::span<const float> coeffs, const Vec3& dir, int degree,
                      const Vec3& upstream, std::span<float> grad_coeffs) {
  check_count(coeffs, degree);
  if (grad_coeffs.size() != coeffs.size()) {
    throw InvalidArgument("SH gradient buffer size mismatch");
  }
  std::array<float, kMaxBasis> value{};
  std::array<Vec3, kMaxBasis> grad;
  basis_with_gradient(dir, degree, value.data(), grad.data());
  const int n = sh_basis_count(degree);

  Vec3 raw = Vec3::Constant(0.5f);
  for (int b = 0; b < n; ++b) {
    for (int c = 0; c < 3; ++c) raw[c] += value[b] * coeffs[3 * b + c];
  }
  Vec3 g = upstream;
  for (int c = 0; c < 3; ++c) {
    if (raw[c] < 0.0f) g[c] = 0.0f;
  }

  Vec3 grad_dir = Vec3::Zero();
  for (int b = 0; b < n; ++b) {
    float along = 0.0f;
    for (int c = 0; c < 3; ++c) {
      grad_coeffs[3 * b + c] = g[c] * value[b];
      along += g[c] * coeffs[3 * b + c];
    }
    grad_dir += along * grad[b];
  }
  return grad_dir;
}

}  // namespace splat
