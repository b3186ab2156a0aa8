// SPDX-License-Identifier: Apache-2.0
#include "splat/covariance.hpp"

#include <array>

namespace splat {

Mat3 rotation_matrix(const Quat& q_raw) {
  const Quat q = q_raw.normalized();
  const float w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),  //
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),   //
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

Mat3 build_covariance(const Quat& rotation, const Vec3& log_scale) {
  const Mat3 m = rotation_matrix(rotation) * log_scale.array().exp().matrix().asDiagonal();
  return m * m.transpose();
}

CovarianceGrad build_covariance_backward(const Mat3& upstream, const Quat& rotation,
                                         const Vec3& log_scale) {
  const float norm = rotation.norm();
  const Quat q = rotation / norm;
  const Mat3 r = rotation_matrix(q);
  const Vec3 s = log_scale.array().exp().matrix();
  const Mat3 m = r * s.asDiagonal();

  // Sigma = M M^T, so dL/dM = (G + G^T) M.
  const Mat3 sym = upstream + upstream.transpose();
  const Mat3 grad_m = sym * m;

  CovarianceGrad out;
  const Mat3 rt_gm = r.transpose() * grad_m;
  for (int k = 0; k < 3; ++k) out.log_scale[k] = rt_gm(k, k) * s[k];

  const Mat3 g = grad_m * s.asDiagonal();  // dL/dR
  const float w = q[0], x = q[1], y = q[2], z = q[3];
  std::array<Mat3, 4> dr;
  dr[0] << 0, -2 * z, 2 * y, 2 * z, 0, -2 * x, -2 * y, 2 * x, 0;
  dr[1] << 0, 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x;
  dr[2] << -4 * y, 2 * x, 2 * w, 2 * x, 0, 2 * z, -2 * w, 2 * z, -4 * y;
  dr[3] << -4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, 0;
  Quat grad_qn;
  for (int c = 0; c < 4; ++c) grad_qn[c] = g.cwiseProduct(dr[c]).sum();

  // Through q = q_raw / |q_raw|.
  out.rotation = (grad_qn - q * q.dot(grad_qn)) / norm;
  return out;
}

}  // namespace splat
