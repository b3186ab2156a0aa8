// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "oracles/finite_difference.hpp"
#include "splat/camera.hpp"
#include "splat/classifier.hpp"
#include "splat/covariance.hpp"
#include "splat/error.hpp"
#include "splat/gaussians.hpp"
#include "splat/projection.hpp"
#include "splat/sh.hpp"

namespace splat {
namespace {

Quat random_quat(std::mt19937& rng) {
  std::normal_distribution<float> n(0.0f, 1.0f);
  return Quat(n(rng), n(rng), n(rng), n(rng)).normalized();
}

Vec3 random_vec(std::mt19937& rng, float lo, float hi) {
  std::uniform_real_distribution<float> u(lo, hi);
  return {u(rng), u(rng), u(rng)};
}

Camera unit_camera() {
  Camera cam;
  cam.width = 4;
  cam.height = 4;
  cam.fx = cam.fy = 1.0f;
  cam.cx = cam.cy = 2.0f;
  return cam;
}

TEST(Covariance, IdentityCases) {
  const Quat ident(1, 0, 0, 0);
  EXPECT_TRUE(build_covariance(ident, Vec3::Zero()).isApprox(Mat3::Identity(), 1e-6f));

  const float ln2 = std::log(2.0f);
  const Mat3 scaled = build_covariance(ident, Vec3(ln2, 0, 0));
  EXPECT_TRUE(scaled.isApprox(Vec3(4, 1, 1).asDiagonal().toDenseMatrix(), 1e-5f));

  const float h = std::sqrt(0.5f);
  const Mat3 rotated = build_covariance(Quat(h, 0, 0, h), Vec3(ln2, 0, 0));
  EXPECT_TRUE(rotated.isApprox(Vec3(1, 4, 1).asDiagonal().toDenseMatrix(), 1e-5f));
}

TEST(Covariance, SymmetricWithBoundedEigenvalues) {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const Quat q = random_quat(rng);
    const Vec3 ls = random_vec(rng, -2.0f, 1.0f);
    const Mat3 s = build_covariance(q, ls);
    EXPECT_EQ((s - s.transpose()).cwiseAbs().maxCoeff(), 0.0f);
    Eigen::SelfAdjointEigenSolver<Mat3> eig(s);
    const float min_scale = std::exp(2.0f * ls.minCoeff());
    EXPECT_GE(eig.eigenvalues().minCoeff(), min_scale - 1e-5f);
  }
}

TEST(Covariance, BackwardZeroUpstream) {
  const auto g = build_covariance_backward(Mat3::Zero(), Quat(0.3f, 0.1f, -0.5f, 0.2f),
                                           Vec3(0.1f, -0.2f, 0.3f));
  EXPECT_EQ(g.rotation.squaredNorm(), 0.0f);
  EXPECT_EQ(g.log_scale.squaredNorm(), 0.0f);
}

TEST(Covariance, BackwardTraceOfIdentity) {
  const auto g = build_covariance_backward(Mat3::Identity(), Quat(1, 0, 0, 0), Vec3::Zero());
  EXPECT_NEAR(g.log_scale.x(), 2.0f, 1e-6f);
  EXPECT_NEAR(g.log_scale.y(), 2.0f, 1e-6f);
  EXPECT_NEAR(g.log_scale.z(), 2.0f, 1e-6f);
  EXPECT_NEAR(g.rotation.norm(), 0.0f, 1e-6f);
}

TEST(Covariance, BackwardMatchesFiniteDifferences) {
  std::mt19937 rng(11);
  std::normal_distribution<float> n(0.0f, 1.0f);
  for (int trial = 0; trial < 100; ++trial) {
    // Unnormalized on purpose: optimizer steps leave quaternions off the sphere.
    Quat q = random_quat(rng) * (0.5f + std::uniform_real_distribution<float>(0, 1)(rng));
    Vec3 ls = random_vec(rng, -1.0f, 0.5f);
    Mat3 up;
    for (int i = 0; i < 9; ++i) up(i) = n(rng);

    std::vector<float> params{q[0], q[1], q[2], q[3], ls[0], ls[1], ls[2]};
    auto loss = [&]() {
      const Mat3 s = build_covariance(Quat(params[0], params[1], params[2], params[3]),
                                      Vec3(params[4], params[5], params[6]));
      return static_cast<double>(up.cwiseProduct(s).sum());
    };
    const auto numeric = oracle::central_difference(params, loss);
    const auto g = build_covariance_backward(up, q, ls);
    std::vector<float> analytic{g.rotation[0], g.rotation[1], g.rotation[2], g.rotation[3],
                                g.log_scale[0], g.log_scale[1], g.log_scale[2]};
    EXPECT_LT(oracle::relative_error(analytic, numeric), 1e-3) << "trial " << trial;
  }
}

TEST(Projection, OnAxisUnitCovariance) {
  const Camera cam = unit_camera();
  const auto p = project_gaussian(Vec3(0, 0, 1), Mat3::Identity(), cam);
  ASSERT_TRUE(p.has_value());
  EXPECT_TRUE(p->cov2d.isApprox((1.0f + kLowPassVariance) * Mat2::Identity(), 1e-6f));
  EXPECT_NEAR(p->jacobian(0, 0), 1.0f, 1e-6f);
  EXPECT_NEAR(p->jacobian(1, 1), 1.0f, 1e-6f);
  EXPECT_NEAR(p->mean2d.x(), 2.0f, 1e-6f);
  EXPECT_NEAR(p->depth, 1.0f, 1e-6f);
}

TEST(Projection, JacobianMatchesNumericProjection) {
  Camera cam = unit_camera();
  cam.width = cam.height = 64;
  cam.cx = cam.cy = 32.0f;
  cam.fx = 40.0f;
  cam.fy = 30.0f;
  const Vec3 t(0.3f, -0.2f, 2.0f);
  const auto p = project_gaussian(t, Mat3::Identity() * 1e-4f, cam);
  ASSERT_TRUE(p.has_value());
  auto proj = [&](const Vec3& x) {
    return Eigen::Vector2d(cam.fx * x.x() / x.z(), cam.fy * x.y() / x.z());
  };
  for (int k = 0; k < 3; ++k) {
    Vec3 e = Vec3::Zero();
    e[k] = 1e-3f;
    const Eigen::Vector2d col = (proj(t + e) - proj(t - e)) / 2e-3;
    EXPECT_NEAR(p->jacobian(0, k), col.x(), 1e-2 * std::max(1.0, std::abs(col.x())));
    EXPECT_NEAR(p->jacobian(1, k), col.y(), 1e-2 * std::max(1.0, std::abs(col.y())));
  }
}

TEST(Projection, BehindCameraIsCulled) {
  const Camera cam = unit_camera();
  EXPECT_FALSE(project_gaussian(Vec3(0, 0, -1), Mat3::Identity(), cam).has_value());
  ProjectionStatus status;
  EXPECT_FALSE(project_gaussian(Vec3(0, 0, 0.005f), Mat3::Identity(), cam, kDefaultNearPlane, 3.0f,
                                &status));
  EXPECT_EQ(status, ProjectionStatus::kBehindNearPlane);
}

TEST(Projection, OffscreenIsCulled) {
  Camera cam = unit_camera();
  cam.fx = cam.fy = 100.0f;
  ProjectionStatus status;
  EXPECT_FALSE(project_gaussian(Vec3(5, 0, 1), Mat3::Identity() * 1e-6f, cam, kDefaultNearPlane,
                                3.0f, &status));
  EXPECT_EQ(status, ProjectionStatus::kOffscreen);
}

TEST(Projection, FootprintShrinksWithDepth) {
  const Camera cam = unit_camera();
  const Mat2 near = projected_covariance(Vec3(0, 0, 1), Mat3::Identity(), cam);
  const Mat2 far = projected_covariance(Vec3(0, 0, 2), Mat3::Identity(), cam);
  // Ellipse area goes with sqrt(det).
  EXPECT_NEAR(std::sqrt(far.determinant()) / std::sqrt(near.determinant()), 0.25f, 1e-6f);
}

TEST(Projection, FocalScaling) {
  std::mt19937 rng(5);
  Camera cam = unit_camera();
  cam.width = cam.height = 64;
  cam.cx = cam.cy = 32.0f;
  cam.fx = cam.fy = 20.0f;
  Camera doubled = cam;
  doubled.fx = doubled.fy = 40.0f;
  for (int trial = 0; trial < 20; ++trial) {
    const Vec3 pos = random_vec(rng, -0.3f, 0.3f) + Vec3(0, 0, 3);
    const Mat3 cov = build_covariance(random_quat(rng), random_vec(rng, -3.0f, -1.0f));
    const auto a = project_gaussian(pos, cov, cam);
    const auto b = project_gaussian(pos, cov, doubled);
    ASSERT_TRUE(a && b);
    const Vec2 c(32, 32);
    EXPECT_TRUE((b->mean2d - c).isApprox(2.0f * (a->mean2d - c), 1e-5f));
    EXPECT_TRUE(projected_covariance(pos, cov, doubled)
                    .isApprox(4.0f * projected_covariance(pos, cov, cam), 1e-5f));
  }
}

TEST(Projection, BackwardMatchesFiniteDifferences) {
  std::mt19937 rng(3);
  std::normal_distribution<float> n(0.0f, 1.0f);
  Camera cam = unit_camera();
  cam.width = cam.height = 32;
  cam.cx = cam.cy = 16.0f;
  cam.fx = 30.0f;
  cam.fy = 28.0f;
  const float angle = 0.3f;
  cam.world_to_camera = {std::cos(angle), 0, std::sin(angle), 0.1f, 0, 1, 0, -0.2f,
                         -std::sin(angle), 0, std::cos(angle), 0.5f, 0, 0, 0, 1};
  for (int trial = 0; trial < 100; ++trial) {
    const Vec3 pos = random_vec(rng, -0.5f, 0.5f) + Vec3(0, 0, 3);
    const Mat3 cov = build_covariance(random_quat(rng), random_vec(rng, -2.5f, -1.0f));
    const Vec2 gm(n(rng), n(rng));
    Mat2 gc;
    gc << n(rng), n(rng), n(rng), n(rng);

    std::vector<float> params(12);
    for (int k = 0; k < 3; ++k) params[k] = pos[k];
    for (int k = 0; k < 9; ++k) params[3 + k] = cov(k);
    auto loss = [&]() {
      const Vec3 p(params[0], params[1], params[2]);
      const Mat3 s = Eigen::Map<const Mat3>(&params[3]);
      const Vec3 t = cam.to_camera(p);
      const Vec2 mean(cam.fx * t.x() / t.z() + cam.cx, cam.fy * t.y() / t.z() + cam.cy);
      const Mat2 c2 = projected_covariance(p, s, cam);
      return static_cast<double>(gm.dot(mean)) + static_cast<double>(gc.cwiseProduct(c2).sum());
    };
    const auto numeric = oracle::central_difference(params, loss);
    const ProjectionGrad g = project_gaussian_backward(pos, cov, cam, gm, gc);
    std::vector<float> analytic(12);
    for (int k = 0; k < 3; ++k) analytic[k] = g.position[k];
    for (int k = 0; k < 9; ++k) analytic[3 + k] = g.covariance(k);
    EXPECT_LT(oracle::relative_error(analytic, numeric), 1e-3) << "trial " << trial;
  }
}

std::vector<float> random_coeffs(std::mt19937& rng, int degree, float scale) {
  std::normal_distribution<float> n(0.0f, scale);
  std::vector<float> c(3 * sh_basis_count(degree));
  for (float& v : c) v = n(rng);
  return c;
}

TEST(SphericalHarmonics, DcConvention) {
  const std::vector<float> zero(3, 0.0f);
  const Vec3 dir(0, 0, 1);
  EXPECT_TRUE(eval_sh(zero, dir, 0).isApprox(Vec3::Constant(0.5f)));
  const float c = 0.7f;
  const std::vector<float> dc(3, c);
  const float expected = 0.5f + c / (2.0f * std::sqrt(std::numbers::pi_v<float>));
  EXPECT_NEAR(eval_sh(dc, dir, 0).x(), expected, 1e-6f);
  EXPECT_NEAR(eval_sh(dc, dir, 0).z(), expected, 1e-6f);
}

TEST(SphericalHarmonics, DegreeOneIsOdd) {
  std::mt19937 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<float> c = random_coeffs(rng, 1, 0.1f);
    c[0] = c[1] = c[2] = 0.0f;  // degree-1 part only, small enough to avoid the clamp
    const Vec3 d = random_vec(rng, -1, 1).normalized();
    const Vec3 plus = eval_sh(c, d, 1) - Vec3::Constant(0.5f);
    const Vec3 minus = eval_sh(c, -d, 1) - Vec3::Constant(0.5f);
    EXPECT_TRUE((plus + minus).cwiseAbs().maxCoeff() < 1e-6f);
  }
}

TEST(SphericalHarmonics, DegreeRestriction) {
  std::mt19937 rng(4);
  for (int degree = 1; degree <= 3; ++degree) {
    std::vector<float> c(3 * sh_basis_count(degree), 0.0f);
    const auto dc = random_coeffs(rng, 0, 0.5f);
    std::copy(dc.begin(), dc.end(), c.begin());
    const Vec3 d = random_vec(rng, -1, 1).normalized();
    EXPECT_TRUE(eval_sh(c, d, degree).isApprox(eval_sh(dc, d, 0), 1e-6f));
  }
}

TEST(SphericalHarmonics, MismatchedCountThrows) {
  const std::vector<float> c(5, 0.0f);
  EXPECT_THROW(eval_sh(c, Vec3(0, 0, 1), 1), InvalidArgument);
  EXPECT_THROW(eval_sh(std::vector<float>(48), Vec3(0, 0, 1), 4), InvalidArgument);
}

TEST(SphericalHarmonics, BackwardDcLinearity) {
  const std::vector<float> c(3, 0.0f);
  std::vector<float> g(3);
  eval_sh_backward(c, Vec3(0, 0, 1), 0, Vec3(1, 0, 0), g);
  EXPECT_NEAR(g[0], kShC0, 1e-7f);
  EXPECT_EQ(g[1], 0.0f);
  EXPECT_EQ(g[2], 0.0f);
}

TEST(SphericalHarmonics, ClampKillsGradient) {
  std::vector<float> c{-10.0f, 0.0f, 0.0f};
  std::vector<float> g(3);
  eval_sh_backward(c, Vec3(0, 0, 1), 0, Vec3(1, 1, 1), g);
  EXPECT_EQ(g[0], 0.0f);
  EXPECT_NEAR(g[1], kShC0, 1e-7f);
}

TEST(SphericalHarmonics, BackwardMatchesFiniteDifferences) {
  std::mt19937 rng(9);
  std::normal_distribution<float> n(0.0f, 1.0f);
  for (int trial = 0; trial < 100; ++trial) {
    const int degree = trial % 4;
    std::vector<float> c = random_coeffs(rng, degree, 0.15f);
    const Vec3 d = random_vec(rng, -1, 1).normalized();
    const Vec3 up(n(rng), n(rng), n(rng));

    std::vector<float> params(c);
    params.insert(params.end(), {d.x(), d.y(), d.z()});
    const std::size_t nc = c.size();
    auto loss = [&]() {
      const Vec3 dir(params[nc], params[nc + 1], params[nc + 2]);
      return static_cast<double>(
          up.dot(eval_sh(std::span<const float>(params.data(), nc), dir, degree)));
    };
    const auto numeric = oracle::central_difference(params, loss);
    std::vector<float> analytic(nc + 3);
    const Vec3 gd = eval_sh_backward(c, d, degree, up, std::span<float>(analytic.data(), nc));
    for (int k = 0; k < 3; ++k) analytic[nc + k] = gd[k];
    EXPECT_LT(oracle::relative_error(analytic, numeric), 1e-3) << "trial " << trial;
  }
}

TEST(GaussianSet, ValidateAndRenormalize) {
  GaussianSet g(3, 1);
  EXPECT_NO_THROW(g.validate());
  EXPECT_EQ(g.sh_per_gaussian(), 12);
  g.set_rotation(1, Quat(2, 0, 0, 0));
  g.renormalize_rotations();
  EXPECT_NEAR(g.rotation(1).norm(), 1.0f, 1e-6f);
  g.id_features.pop_back();
  EXPECT_THROW(g.validate(), InvalidArgument);
}

TEST(Camera, LookAtIsOrthonormal) {
  const Camera cam = Camera::look_at(Vec3(3, -1, 2), Vec3::Zero(), Vec3(0, -1, 0), 64, 64, 50);
  EXPECT_NO_THROW(cam.validate());
  EXPECT_TRUE(cam.center().isApprox(Vec3(3, -1, 2), 1e-5f));
  const Vec3 t = cam.to_camera(Vec3::Zero());
  EXPECT_NEAR(t.x(), 0.0f, 1e-5f);
  EXPECT_NEAR(t.y(), 0.0f, 1e-5f);
  EXPECT_GT(t.z(), 0.0f);
}

TEST(Camera, RejectsBadIntrinsics) {
  Camera cam = unit_camera();
  cam.fx = 0.0f;
  EXPECT_THROW(cam.validate(), InvalidArgument);
  cam = unit_camera();
  cam.cx = 4.0f;
  EXPECT_THROW(cam.validate(), InvalidArgument);
  cam = unit_camera();
  cam.world_to_camera[0] = 1.1f;
  EXPECT_THROW(cam.validate(), InvalidArgument);
}

TEST(Classifier, ZeroWeightsGiveUniform) {
  Classifier c(4);
  std::vector<float> f(kIdFeatureDim, 0.3f), p(4);
  c.probabilities(f, p);
  for (float v : p) EXPECT_NEAR(v, 0.25f, 1e-7f);
}

}  // namespace
}  // namespace splat
