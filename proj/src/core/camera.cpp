// SPDX-License-Identifier: Apache-2.0
#include "splat/camera.hpp"

#include <Eigen/Geometry>
#include <fmt/format.h>

#include "splat/error.hpp"

namespace splat {

Mat3 Camera::rotation() const {
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r(i, j) = world_to_camera[4 * i + j];
  return r;
}

Vec3 Camera::translation() const {
  return {world_to_camera[3], world_to_camera[7], world_to_camera[11]};
}

Vec3 Camera::center() const { return -(rotation().transpose() * translation()); }

void Camera::validate(float orthonormal_tolerance) const {
  if (width <= 0 || height <= 0) {
    throw InvalidArgument(fmt::format("camera size {}x{} must be positive", width, height));
  }
  if (!(fx > 0.0f) || !(fy > 0.0f)) {
    throw InvalidArgument(fmt::format("focal lengths must be positive (fx={}, fy={})", fx, fy));
  }
  if (!(cx >= 0.0f && cx < static_cast<float>(width)) ||
      !(cy >= 0.0f && cy < static_cast<float>(height))) {
    throw InvalidArgument(fmt::format("principal point ({}, {}) outside {}x{} image", cx, cy,
                                      width, height));
  }
  const Mat3 r = rotation();
  const float err = (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (!(err <= orthonormal_tolerance)) {
    throw InvalidArgument(
        fmt::format("world_to_camera rotation is not orthonormal (max |RtR - I| = {:.3g})", err));
  }
  const float bottom_err = std::abs(world_to_camera[12]) + std::abs(world_to_camera[13]) +
                           std::abs(world_to_camera[14]) + std::abs(world_to_camera[15] - 1.0f);
  if (!(bottom_err <= orthonormal_tolerance)) {
    throw InvalidArgument("world_to_camera bottom row must be (0, 0, 0, 1)");
  }
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, int width, int height,
                       float focal) {
  const Vec3 forward = (target - eye).normalized();
  // Image +y points down, so the camera's y axis opposes `up`.
  const Vec3 right = forward.cross(up).normalized();
  const Vec3 down = forward.cross(right).normalized();
  Mat3 r;
  r.row(0) = right.transpose();
  r.row(1) = down.transpose();
  r.row(2) = forward.transpose();
  const Vec3 t = -(r * eye);

  Camera cam;
  cam.width = width;
  cam.height = height;
  cam.fx = focal;
  cam.fy = focal;
  cam.cx = 0.5f * static_cast<float>(width);
  cam.cy = 0.5f * static_cast<float>(height);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) cam.world_to_camera[4 * i + j] = r(i, j);
    cam.world_to_camera[4 * i + 3] = t[i];
  }
  cam.world_to_camera[12] = cam.world_to_camera[13] = cam.world_to_camera[14] = 0.0f;
  cam.world_to_camera[15] = 1.0f;
  return cam;
}

}  // namespace splat
