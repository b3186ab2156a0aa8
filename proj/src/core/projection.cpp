// SPDX-License-Identifier: Apache-2.0
#include "splat/projection.hpp"

#include <cmath>

namespace splat {
namespace {

Mat23 projection_jacobian(const Vec3& t, const Camera& camera) {
  const float inv_z = 1.0f / t.z();
  const float inv_z2 = inv_z * inv_z;
  Mat23 j;
  j << camera.fx * inv_z, 0.0f, -camera.fx * t.x() * inv_z2,  //
      0.0f, camera.fy * inv_z, -camera.fy * t.y() * inv_z2;
  return j;
}

}  // namespace

Mat2 projected_covariance(const Vec3& position, const Mat3& covariance, const Camera& camera) {
  const Mat3 w = camera.rotation();
  const Vec3 t = w * position + camera.translation();
  const Mat23 jw = projection_jacobian(t, camera) * w;
  return jw * covariance * jw.transpose();
}

std::optional<ProjectedGaussian> project_gaussian(const Vec3& position, const Mat3& covariance,
                                                  const Camera& camera, float near_plane,
                                                  float footprint_sigmas,
                                                  ProjectionStatus* status) {
  auto report = [status](ProjectionStatus s) {
    if (status) *status = s;
  };
  const Mat3 w = camera.rotation();
  const Vec3 t = w * position + camera.translation();
  if (!(t.z() > near_plane)) {
    report(ProjectionStatus::kBehindNearPlane);
    return std::nullopt;
  }

  ProjectedGaussian out;
  out.camera_position = t;
  out.depth = t.z();
  out.jacobian = projection_jacobian(t, camera);
  out.mean2d = {camera.fx * t.x() / t.z() + camera.cx, camera.fy * t.y() / t.z() + camera.cy};

  const Mat23 jw = out.jacobian * w;
  Mat2 cov = jw * covariance * jw.transpose();
  cov(0, 1) = cov(1, 0) = 0.5f * (cov(0, 1) + cov(1, 0));
  cov(0, 0) += kLowPassVariance;
  cov(1, 1) += kLowPassVariance;
  out.cov2d = cov;

  const float det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
  if (!(det > 1e-12f)) {
    report(ProjectionStatus::kDegenerate);
    return std::nullopt;
  }
  const float inv_det = 1.0f / det;
  out.conic << cov(1, 1) * inv_det, -cov(0, 1) * inv_det, -cov(1, 0) * inv_det,
      cov(0, 0) * inv_det;

  const float mid = 0.5f * (cov(0, 0) + cov(1, 1));
  const float lambda_max = mid + std::sqrt(std::max(0.0f, mid * mid - det));
  out.radius = std::ceil(footprint_sigmas * std::sqrt(lambda_max));

  const float w_max = static_cast<float>(camera.width - 1);
  const float h_max = static_cast<float>(camera.height - 1);
  if (out.mean2d.x() + out.radius < 0.0f || out.mean2d.x() - out.radius > w_max ||
      out.mean2d.y() + out.radius < 0.0f || out.mean2d.y() - out.radius > h_max ||
      !std::isfinite(out.mean2d.x()) || !std::isfinite(out.mean2d.y())) {
    report(ProjectionStatus::kOffscreen);
    return std::nullopt;
  }
  report(ProjectionStatus::kVisible);
  return out;
}

ProjectionGrad project_gaussian_backward(const Vec3& position, const Mat3& covariance,
                                         const Camera& camera, const Vec2& grad_mean2d,
                                         const Mat2& grad_cov2d) {
  const Mat3 w = camera.rotation();
  const Vec3 t = w * position + camera.translation();
  const float fx = camera.fx, fy = camera.fy;
  const float inv_z = 1.0f / t.z();
  const float inv_z2 = inv_z * inv_z;
  const float inv_z3 = inv_z2 * inv_z;

  const Mat23 j = projection_jacobian(t, camera);
  const Mat23 tm = j * w;

  ProjectionGrad out;
  // cov2d = T Sigma T^T with T = J W.
  const Mat2 g = grad_cov2d;
  out.covariance = tm.transpose() * g * tm;
  const Mat23 grad_t_mat = (g + g.transpose()) * tm * covariance;
  const Mat23 grad_j = grad_t_mat * w.transpose();

  Vec3 grad_cam = Vec3::Zero();
  // mean2d = (fx x/z + cx, fy y/z + cy)
  grad_cam.x() += grad_mean2d.x() * fx * inv_z;
  grad_cam.y() += grad_mean2d.y() * fy * inv_z;
  grad_cam.z() -= grad_mean2d.x() * fx * t.x() * inv_z2 + grad_mean2d.y() * fy * t.y() * inv_z2;

  // J entries: (0,0)=fx/z, (0,2)=-fx x/z^2, (1,1)=fy/z, (1,2)=-fy y/z^2.
  grad_cam.z() += grad_j(0, 0) * (-fx * inv_z2);
  grad_cam.x() += grad_j(0, 2) * (-fx * inv_z2);
  grad_cam.z() += grad_j(0, 2) * (2.0f * fx * t.x() * inv_z3);
  grad_cam.z() += grad_j(1, 1) * (-fy * inv_z2);
  grad_cam.y() += grad_j(1, 2) * (-fy * inv_z2);
  grad_cam.z() += grad_j(1, 2) * (2.0f * fy * t.y() * inv_z3);

  out.position = w.transpose() * grad_cam;
  return out;
}

}  // namespace splat
