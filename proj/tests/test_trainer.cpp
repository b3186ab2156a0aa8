// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "oracles/finite_difference.hpp"
#include "oracles/scenes.hpp"
#include "splat/adam.hpp"
#include "splat/error.hpp"
#include "splat/losses.hpp"
#include "splat/raster.hpp"
#include "splat/synth.hpp"
#include "splat/trainer.hpp"

namespace splat {
namespace {

using oracle::central_difference;
using oracle::random_scene;
using oracle::relative_error;
using oracle::small_camera;

// Scalar Adam written from the textbook recurrences, in double.
struct ReferenceAdam {
  double lr, b1 = 0.9, b2 = 0.999, eps = 1e-8, m = 0, v = 0;
  int t = 0;
  double step(double x, double g) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    return x - lr * mh / (std::sqrt(vh) + eps);
  }
};

TEST(Adam, ZeroGradientLeavesParams) {
  AdamState st;
  st.add_group("p", 3, 0.1f);
  std::vector<float> p{1, 2, 3}, g(3, 0.0f);
  const ParamGroupRef refs[] = {{p, g}};
  adam_step(st, refs);
  EXPECT_EQ(st.step, 1u);
  EXPECT_EQ(p, (std::vector<float>{1, 2, 3}));
}

TEST(Adam, FirstStepIsUnitUpdate) {
  AdamState st;
  st.add_group("x", 1, 0.1f);
  std::vector<float> p{0.0f}, g{1.0f};
  const ParamGroupRef refs[] = {{p, g}};
  adam_step(st, refs);
  EXPECT_NEAR(p[0], -0.1f, 1e-6f);
}

TEST(Adam, MatchesReferenceTrajectory) {
  AdamState st;
  st.add_group("x", 1, 0.05f);
  ReferenceAdam ref{0.05};
  std::vector<float> p{1.5f};
  double x = 1.5;
  std::mt19937 rng(4);
  std::normal_distribution<float> n(0.0f, 1.0f);
  for (int i = 0; i < 10; ++i) {
    std::vector<float> g{2.0f * p[0] + n(rng)};
    const double gx = g[0];
    const ParamGroupRef refs[] = {{p, g}};
    adam_step(st, refs);
    x = ref.step(x, gx);
    EXPECT_NEAR(p[0], x, 1e-5) << i;
  }
  EXPECT_EQ(st.step, 10u);
}

TEST(Adam, NonFiniteNamesGroup) {
  AdamState st;
  st.add_group("positions", 2, 0.1f);
  st.add_group("opacity_logits", 2, 0.1f);
  std::vector<float> a{0, 0}, b{0, 0}, ga{1, 1}, gb{1, NAN};
  const ParamGroupRef refs[] = {{a, ga}, {b, gb}};
  try {
    adam_step(st, refs);
    FAIL();
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("opacity_logits"), std::string::npos);
  }
  EXPECT_EQ(a, (std::vector<float>{0, 0}));
  EXPECT_EQ(st.step, 0u);
}

TEST(Adam, ZeroRateGroupUntouched) {
  AdamState st;
  st.add_group("frozen", 1, 0.0f);
  std::vector<float> p{0.3f}, g{5.0f};
  const ParamGroupRef refs[] = {{p, g}};
  adam_step(st, refs);
  EXPECT_EQ(p[0], 0.3f);
}

RenderOutput flat_render(int w, int h, float v) {
  RenderOutput r;
  r.width = w;
  r.height = h;
  r.color.assign(static_cast<std::size_t>(w) * h * 3, v);
  return r;
}

TEST(Photometric, TrivialCases) {
  const Image white(4, 4, 1.0f);
  EXPECT_EQ(photometric_loss(flat_render(4, 4, 1.0f), white).value, 0.0);
  EXPECT_DOUBLE_EQ(photometric_loss(flat_render(4, 4, 0.0f), white).value, 1.0);
  EXPECT_THROW(photometric_loss(flat_render(4, 3, 0.0f), white), InvalidArgument);
}

TEST(Photometric, MatchesScalarReference) {
  std::mt19937 rng(1);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  RenderOutput r = flat_render(5, 7, 0.0f);
  Image t(5, 7);
  for (auto& v : r.color) v = u(rng);
  for (auto& v : t.rgb) v = u(rng);
  double ref = 0.0;
  for (std::size_t i = 0; i < t.rgb.size(); ++i) ref += std::abs(double(r.color[i]) - t.rgb[i]);
  ref /= static_cast<double>(t.rgb.size());
  const auto loss = photometric_loss(r, t);
  EXPECT_NEAR(loss.value, ref, 1e-7);
  for (std::size_t i = 0; i < t.rgb.size(); ++i) {
    EXPECT_FLOAT_EQ(std::abs(loss.grad[i]), 1.0f / t.rgb.size());
    EXPECT_EQ(loss.grad[i] > 0, r.color[i] > t.rgb[i]);
  }
}

FeatureRenderOutput random_features(int w, int h, std::uint64_t seed) {
  FeatureRenderOutput f;
  f.width = w;
  f.height = h;
  f.features.resize(static_cast<std::size_t>(w) * h * kIdFeatureDim);
  std::mt19937 rng(seed);
  std::normal_distribution<float> n(0.0f, 1.0f);
  for (auto& v : f.features) v = n(rng);
  return f;
}

TEST(CrossEntropy, UniformLogits) {
  const auto f = random_features(3, 3, 1);
  IdMap m{3, 3, {0, 1, 2, 3, 0, 1, 2, 3, kIgnoreId}};
  const auto ce = id_cross_entropy(f, Classifier(4), m);
  EXPECT_NEAR(ce.value, std::log(4.0), 1e-6);
  EXPECT_EQ(ce.counted_pixels, 8u);
}

TEST(CrossEntropy, ConfidentClassifierNearZero) {
  FeatureRenderOutput f;
  f.width = 2;
  f.height = 1;
  f.features.assign(2 * kIdFeatureDim, 0.0f);
  f.features[0] = 1.0f;
  f.features[kIdFeatureDim + 1] = 1.0f;
  Classifier cls(2);
  cls.weights[0] = 50.0f;
  cls.weights[kIdFeatureDim + 1] = 50.0f;
  const auto ce = id_cross_entropy(f, cls, IdMap{2, 1, {0, 1}});
  EXPECT_LT(ce.value, 1e-10);
}

TEST(CrossEntropy, AllIgnoredIsZero) {
  const auto f = random_features(2, 2, 3);
  const auto ce = id_cross_entropy(f, Classifier::random(3, 1), IdMap{2, 2, {kIgnoreId, kIgnoreId, kIgnoreId, kIgnoreId}});
  EXPECT_EQ(ce.value, 0.0);
  for (float g : ce.grad_features) EXPECT_EQ(g, 0.0f);
  for (float g : ce.grad_classifier.weights) EXPECT_EQ(g, 0.0f);
}

TEST(CrossEntropy, OutOfRangeLabelRejected) {
  const auto f = random_features(2, 1, 3);
  EXPECT_THROW(id_cross_entropy(f, Classifier(3), IdMap{2, 1, {0, 3}}), InvalidArgument);
}

TEST(CrossEntropy, GradientMatchesFiniteDifferences) {
  auto f = random_features(4, 4, 7);
  Classifier cls = Classifier::random(5, 2, 0.5f);
  IdMap m{4, 4, {}};
  for (int i = 0; i < 16; ++i) m.ids.push_back(i % 6 == 5 ? kIgnoreId : i % 5);
  const auto ce = id_cross_entropy(f, cls, m);
  auto loss = [&] { return id_cross_entropy(f, cls, m).value; };
  EXPECT_LT(relative_error(ce.grad_classifier.weights, central_difference(cls.weights, loss)), 1e-2);
  EXPECT_LT(relative_error(ce.grad_classifier.bias, central_difference(cls.bias, loss)), 1e-2);
  EXPECT_LT(relative_error(ce.grad_features, central_difference(f.features, loss)), 1e-2);
}

GaussianSet clustered(std::size_t per_cluster, bool uniform_features, std::uint64_t seed) {
  GaussianSet g(2 * per_cluster, 0);
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> u(-0.1f, 0.1f);
  std::normal_distribution<float> n(0.0f, 1.0f);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const float cx = i < per_cluster ? 0.0f : 10.0f;
    g.set_position(i, Vec3(cx + u(rng), u(rng), u(rng)));
    for (int d = 0; d < kIdFeatureDim; ++d) {
      g.id_features[i * kIdFeatureDim + d] =
          uniform_features ? (i < per_cluster ? 1.0f : -1.0f) * (d % 3) : n(rng);
    }
  }
  return g;
}

TEST(SpatialLoss, IdenticalFeaturesGiveZero) {
  GaussianSet g = clustered(10, false, 1);
  for (std::size_t i = 0; i < g.size(); ++i)
    for (int d = 0; d < kIdFeatureDim; ++d) g.id_features[i * kIdFeatureDim + d] = 0.3f * d;
  const auto sp = spatial_consistency_loss(g, Classifier::random(4, 1, 0.5f), 1000, 5, 0);
  EXPECT_NEAR(sp.value, 0.0, 1e-7);
}

TEST(SpatialLoss, SeparatedUniformClustersGiveZero) {
  const GaussianSet g = clustered(12, true, 2);
  const auto sp = spatial_consistency_loss(g, Classifier::random(4, 1, 0.5f), 1000, 8, 0);
  EXPECT_NEAR(sp.value, 0.0, 1e-7);
  const auto mixed = spatial_consistency_loss(g, Classifier::random(4, 1, 0.5f), 1000, 15, 0);
  EXPECT_GT(mixed.value, 1e-3);
}

TEST(SpatialLoss, GradientMatchesFiniteDifferences) {
  GaussianSet g = clustered(15, false, 3);
  Classifier cls = Classifier::random(4, 5, 0.5f);
  const auto sp = spatial_consistency_loss(g, cls, 12, 4, 9);
  auto loss = [&] { return spatial_consistency_loss(g, cls, 12, 4, 9).value; };
  const auto num = central_difference(g.id_features, loss);
  EXPECT_LT(relative_error(sp.grad_features, num), 1e-2);
  EXPECT_LT(relative_error(sp.grad_classifier.weights, central_difference(cls.weights, loss)), 1e-2);
}

TEST(SpatialLoss, RequiresMoreThanK) {
  GaussianSet g = clustered(2, false, 3);
  EXPECT_THROW(spatial_consistency_loss(g, Classifier(2), 10, 4, 0), InvalidArgument);
}

TEST(Neighbors, BruteForceOrder) {
  const std::vector<float> pos{0, 0, 0, 1, 0, 0, 3, 0, 0, 0.5f, 0, 0};
  const std::vector<std::uint32_t> q{0, 2};
  const auto nb = nearest_neighbors(pos, q, 2);
  EXPECT_EQ(nb[0], (std::vector<std::uint32_t>{3, 1}));
  EXPECT_EQ(nb[1], (std::vector<std::uint32_t>{1, 3}));
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_EQ(c.iterations, 30000);
  EXPECT_NO_THROW(c.validate());
  c.iterations = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  c.knn = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  c.lambda_ce = -1;
  EXPECT_THROW(c.validate(), InvalidArgument);
  EXPECT_NE(TrainConfig{}.hash(), c.hash());
}

struct SmallScene {
  SynthScene scene;
  std::vector<TrainView> views;
};

SmallScene small_scene(bool masks) {
  SynthSpec spec;
  spec.objects = 2;
  spec.gaussians_per_object = 25;
  spec.background_gaussians = 50;
  spec.cameras = 6;
  spec.image_size = 32;
  SmallScene s{build_synth_scene(spec), {}};
  for (const Camera& cam : s.scene.cameras) {
    TrainView v;
    v.camera = cam;
    v.image = Image(cam.width, cam.height);
    v.image.rgb = render_color(s.scene.gaussians, cam, Vec3::Zero()).color;
    if (masks) v.mask = derive_mask(s.scene.gaussians, s.scene.labels, 3, cam);
    s.views.push_back(std::move(v));
  }
  return s;
}

TEST(Train, GroundTruthIsNearFixedPoint) {
  const SmallScene s = small_scene(false);
  TrainConfig cfg;
  cfg.iterations = 100;
  const TrainResult r = train(s.views, 0, s.scene.gaussians, cfg);
  ASSERT_EQ(r.log.size(), 100u);
  for (const auto& rec : r.log) EXPECT_LT(rec.photometric, 1e-3) << rec.iteration;
}

TEST(Train, DeterministicAndMaskFreeFeaturesFrozen) {
  const SmallScene s = small_scene(false);
  TrainConfig cfg;
  cfg.iterations = 30;
  const GaussianSet init = perturb(s.scene.gaussians, 0.05f, 2);
  const TrainResult a = train(s.views, 0, init, cfg);
  const TrainResult b = train(s.views, 0, init, cfg);
  EXPECT_EQ(a.gaussians.positions, b.gaussians.positions);
  EXPECT_EQ(a.gaussians.sh_coeffs, b.gaussians.sh_coeffs);
  EXPECT_EQ(a.gaussians.id_features, init.id_features);
  EXPECT_NE(a.gaussians.positions, init.positions);
  EXPECT_EQ(a.metadata.config_hash, cfg.hash());
}

TEST(Train, ZeroFeatureWeightsMatchPhotometricOnly) {
  const SmallScene with = small_scene(true);
  const SmallScene without = small_scene(false);
  TrainConfig cfg;
  cfg.iterations = 25;
  const GaussianSet init = perturb(with.scene.gaussians, 0.05f, 2);
  TrainConfig zero = cfg;
  zero.lambda_ce = zero.lambda_3d = 0.0f;
  const TrainResult a = train(with.views, 3, init, zero);
  const TrainResult b = train(without.views, 0, init, cfg);
  EXPECT_EQ(a.gaussians.positions, b.gaussians.positions);
  EXPECT_EQ(a.gaussians.rotations, b.gaussians.rotations);
  EXPECT_EQ(a.gaussians.log_scales, b.gaussians.log_scales);
  EXPECT_EQ(a.gaussians.opacity_logits, b.gaussians.opacity_logits);
  EXPECT_EQ(a.gaussians.sh_coeffs, b.gaussians.sh_coeffs);
}

TEST(Train, LossDecreasesFromPerturbation) {
  const SmallScene s = small_scene(false);
  TrainConfig cfg;
  cfg.iterations = 300;
  const TrainResult r = train(s.views, 0, perturb(s.scene.gaussians, 0.05f, 3), cfg);
  double first = 0, last = 0;
  for (int i = 0; i < 50; ++i) {
    first += r.log[i].photometric;
    last += r.log[r.log.size() - 1 - i].photometric;
  }
  EXPECT_LT(last, 0.7 * first);
}

TEST(Train, SnapshotsAndPruning) {
  const SmallScene s = small_scene(false);
  TrainConfig cfg;
  cfg.iterations = 20;
  cfg.snapshot_every = 5;
  cfg.prune_every = 10;
  cfg.prune_opacity = 0.5f;
  GaussianSet init = s.scene.gaussians;
  for (std::size_t i = 0; i < init.size(); i += 2) init.opacity_logits[i] = -5.0f;
  int snaps = 0;
  TrainHooks hooks;
  hooks.on_snapshot = [&](int, const GaussianSet&, const Classifier&) { ++snaps; };
  const TrainResult r = train(s.views, 0, init, cfg, hooks);
  EXPECT_EQ(snaps, 4);
  EXPECT_LT(r.gaussians.size(), init.size());
  EXPECT_NO_THROW(r.gaussians.validate());
}

TEST(Train, DivergenceGuard) {
  SmallScene s = small_scene(false);
  s.views[0].image.rgb[5] = NAN;
  TrainConfig cfg;
  cfg.iterations = 10;
  EXPECT_THROW(train(s.views, 0, s.scene.gaussians, cfg), DivergenceError);
}

TEST(InitFromPoints, UsesColorsAndSpacing) {
  PointCloud pc;
  pc.positions = {0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1};
  pc.colors = {0.5f, 0.5f, 0.5f, 1, 0, 0, 0, 1, 0, 0, 0, 1};
  const GaussianSet g = initialize_from_points(pc, 1, 0);
  ASSERT_EQ(g.size(), 4u);
  EXPECT_NEAR(g.sh(0)[0], 0.0f, 1e-6f);
  EXPECT_NEAR(g.opacity(2), 0.1f, 1e-6f);
  EXPECT_NEAR(std::exp(g.log_scales[0]), 1.0f, 1e-5f);
}

}  // namespace
}  // namespace splat
