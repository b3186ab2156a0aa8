// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "oracles/finite_difference.hpp"
#include "oracles/nnfm_oracle.hpp"
#include "splat/error.hpp"
#include "splat/styler.hpp"
#include "splat/synth.hpp"

namespace splat {
namespace {

using oracle::brute_force_nnfm;

FeatureMap random_map(int layer, int c, int h, int w, std::mt19937& rng, float lo = -1.0f) {
  std::uniform_real_distribution<float> u(lo, 1.0f);
  FeatureMap m{layer, c, h, w, std::vector<float>(static_cast<std::size_t>(c) * h * w)};
  for (auto& v : m.data) v = u(rng);
  return m;
}

FeatureStack random_stack(std::mt19937& rng, int h, int w) {
  FeatureStack s;
  s.maps.push_back(random_map(1, 5, h, w, rng));
  s.maps.push_back(random_map(3, 7, (h + 1) / 2, (w + 1) / 2, rng));
  return s;
}

TEST(Nnfm, MatchesBruteForce) {
  for (std::uint32_t seed = 0; seed < 4; ++seed) {
    std::mt19937 rng(seed);
    const auto r = random_stack(rng, 6, 5);
    const auto s = random_stack(rng, 8, 9);
    EXPECT_NEAR(nnfm_loss(r, s).total, brute_force_nnfm(r, s, false), 1e-6);
    EXPECT_NEAR(nnfm_loss(r, s, true).total, brute_force_nnfm(r, s, true), 1e-5);
  }
}

TEST(Nnfm, PerLayerSumsToTotal) {
  std::mt19937 rng(3);
  const auto r = random_stack(rng, 4, 4);
  const auto s = random_stack(rng, 4, 4);
  const auto out = nnfm_loss(r, s);
  ASSERT_EQ(out.per_layer.size(), 2u);
  EXPECT_DOUBLE_EQ(out.per_layer[0] + out.per_layer[1], out.total);
}

TEST(Nnfm, IdenticalStacksGiveZero) {
  std::mt19937 rng(7);
  const auto r = random_stack(rng, 5, 5);
  EXPECT_NEAR(nnfm_loss(r, r).total, 0.0, 1e-6);
}

TEST(Nnfm, ScaleAndPermutationInvariant) {
  std::mt19937 rng(11);
  const auto r = random_stack(rng, 5, 6);
  const auto s = random_stack(rng, 7, 7);
  const double base = nnfm_loss(r, s).total;

  auto r2 = r;
  for (auto& m : r2.maps)
    for (auto& v : m.data) v *= 3.5f;
  auto s2 = s;
  for (auto& m : s2.maps) {
    const std::size_t n = m.locations();
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    auto copy = m.data;
    for (int k = 0; k < m.channels; ++k)
      for (std::size_t i = 0; i < n; ++i) m.data[k * n + i] = 0.25f * copy[k * n + perm[i]];
  }
  EXPECT_NEAR(nnfm_loss(r2, s2).total, base, 1e-6);
}

TEST(Nnfm, ZeroRenderVectorCountsOneWithoutGradient) {
  std::mt19937 rng(5);
  auto r = random_stack(rng, 3, 3);
  const auto s = random_stack(rng, 4, 4);
  r.maps.resize(1);
  auto s1 = s;
  s1.maps.resize(1);
  for (int k = 0; k < r.maps[0].channels; ++k) r.maps[0].data[k * 9 + 4] = 0.0f;
  const auto out = nnfm_loss(r, s1);
  EXPECT_NEAR(out.total, brute_force_nnfm(r, s1, false), 1e-6);
  for (int k = 0; k < r.maps[0].channels; ++k) EXPECT_EQ(out.grads[0].data[k * 9 + 4], 0.0f);
}

TEST(Nnfm, RejectsEmptyStyleAndMismatch) {
  std::mt19937 rng(1);
  const auto r = random_stack(rng, 3, 3);
  EXPECT_THROW(nnfm_loss(r, FeatureStack{}), InvalidArgument);
  auto s = random_stack(rng, 3, 3);
  s.maps[1].layer = 4;
  EXPECT_THROW(nnfm_loss(r, s), InvalidArgument);
}

TEST(Nnfm, GradientMatchesFiniteDifferences) {
  for (bool raw : {false, true}) {
    for (std::uint32_t seed = 0; seed < 3; ++seed) {
      std::mt19937 rng(seed + 20);
      auto r = random_stack(rng, 4, 5);
      const auto s = random_stack(rng, 6, 6);
      const auto out = nnfm_loss(r, s, raw);
      // A perturbation that changes the nearest-neighbour assignment crosses
      // a kink and is skipped.
      auto assignment = [&](const FeatureStack& st) { return oracle::nnfm_assignment(st, s, raw); };
      const auto base = assignment(r);
      for (std::size_t l = 0; l < r.maps.size(); ++l) {
        auto loss = [&] {
          if (assignment(r) != base) return std::nan("");
          return brute_force_nnfm(r, s, raw);
        };
        const auto num = oracle::central_difference(r.maps[l].data, loss);
        EXPECT_LT(oracle::relative_error(out.grads[l].data, num), 1e-3) << raw << " " << seed << " " << l;
      }
    }
  }
}

TEST(SelectViews, EvenSpacing) {
  EXPECT_EQ(select_views(8, 0.25f), (std::vector<int>{0, 4}));
  EXPECT_EQ(select_views(10, 0.25f), (std::vector<int>{0, 3, 6}));
  EXPECT_EQ(select_views(20, 0.25f), (std::vector<int>{0, 4, 8, 12, 16}));
  EXPECT_EQ(select_views(1, 0.25f), (std::vector<int>{0}));
  EXPECT_EQ(select_views(4, 1.0f), (std::vector<int>{0, 1, 2, 3}));
  EXPECT_TRUE(select_views(0, 0.5f).empty());
  EXPECT_THROW(select_views(4, 0.0f), InvalidArgument);
  EXPECT_THROW(select_views(4, 1.5f), InvalidArgument);
}

TEST(StyleFeatures, ScaleAndMinimumSize) {
  const FeatureExtractor ex = FeatureExtractor::random(0, {4, kPool, 4});
  Image style(16, 12, 0.5f);
  const int layers[] = {4};
  const auto full = prepare_style_features(ex, style, 1.0f, layers);
  EXPECT_EQ(full.maps[0].width, 8);
  EXPECT_EQ(full.maps[0].height, 6);
  const auto half = prepare_style_features(ex, style, 0.5f, layers);
  EXPECT_EQ(half.maps[0].width, 4);
  EXPECT_EQ(half.maps[0].height, 3);
  EXPECT_THROW(prepare_style_features(ex, style, 0.1f, layers), InvalidArgument);
  EXPECT_THROW(prepare_style_features(ex, style, 0.0f, layers), InvalidArgument);
}

struct StyleFixture {
  SynthScene scene;
  FeatureExtractor ex;
  StyleJob job;

  StyleFixture() : ex(FeatureExtractor::random(2, {8, 8, kPool, 16, 16})) {
    SynthSpec spec;
    spec.objects = 2;
    spec.gaussians_per_object = 15;
    spec.background_gaussians = 20;
    spec.cameras = 8;
    spec.image_size = 32;
    scene = build_synth_scene(spec);
    for (std::size_t i = 0; i < scene.labels.size(); ++i)
      if (scene.labels[i] == 1) job.selection.push_back(i);
    job.style = Image(32, 32);
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) {
        const bool on = ((x / 4) + (y / 4)) % 2 == 0;
        job.style.rgb[(y * 32 + x) * 3 + 0] = on ? 0.9f : 0.1f;
        job.style.rgb[(y * 32 + x) * 3 + 1] = on ? 0.2f : 0.6f;
        job.style.rgb[(y * 32 + x) * 3 + 2] = 0.3f;
      }
    job.layers = {3, 8};
    job.iterations = 40;
    job.view_fraction = 0.5f;
  }
};

TEST(Stylize, OnlySelectedShChanges) {
  StyleFixture f;
  const GaussianSet& before = f.scene.gaussians;
  const auto out = stylize(before, f.scene.cameras, f.job, f.ex);
  const GaussianSet& after = out.gaussians;
  EXPECT_EQ(after.positions, before.positions);
  EXPECT_EQ(after.rotations, before.rotations);
  EXPECT_EQ(after.log_scales, before.log_scales);
  EXPECT_EQ(after.opacity_logits, before.opacity_logits);
  EXPECT_EQ(after.id_features, before.id_features);
  const std::size_t k = before.sh_per_gaussian();
  std::vector<bool> selected(before.size(), false);
  for (auto i : f.job.selection) selected[i] = true;
  std::size_t changed = 0;
  for (std::size_t g = 0; g < before.size(); ++g) {
    const bool same = std::equal(&before.sh_coeffs[g * k], &before.sh_coeffs[g * k] + k,
                                 &after.sh_coeffs[g * k]);
    if (!selected[g]) {
      EXPECT_TRUE(same) << g;
    } else if (!same) {
      ++changed;
    }
  }
  EXPECT_GT(changed, f.job.selection.size() / 2);
  EXPECT_EQ(out.views, (std::vector<int>{0, 2, 4, 6}));
  ASSERT_EQ(out.log.size(), 40u);
  EXPECT_EQ(out.log[0].view, 0);
  EXPECT_EQ(out.log[5].view, 2);
  EXPECT_EQ(out.log[0].per_layer.size(), 2u);
}

TEST(Stylize, ReducesStyleLoss) {
  StyleFixture f;
  f.job.iterations = 60;
  const auto style = prepare_style_features(f.ex, f.job.style, 1.0f, f.job.layers);
  const auto views = select_views(8, f.job.view_fraction);
  const double before = mean_nnfm(f.scene.gaussians, f.scene.cameras, views, style, f.ex, f.job.layers);
  const auto out = stylize(f.scene.gaussians, f.scene.cameras, f.job, f.ex);
  const double after = mean_nnfm(out.gaussians, f.scene.cameras, views, style, f.ex, f.job.layers);
  EXPECT_LT(after, before);
}

TEST(Stylize, Deterministic) {
  StyleFixture f;
  f.job.iterations = 10;
  const auto a = stylize(f.scene.gaussians, f.scene.cameras, f.job, f.ex);
  const auto b = stylize(f.scene.gaussians, f.scene.cameras, f.job, f.ex);
  EXPECT_EQ(a.gaussians.sh_coeffs, b.gaussians.sh_coeffs);
}

TEST(Stylize, ContentWeightKeepsCloserToOriginal) {
  StyleFixture f;
  const auto free = stylize(f.scene.gaussians, f.scene.cameras, f.job, f.ex);
  f.job.content_weight = 50.0f;
  const auto held = stylize(f.scene.gaussians, f.scene.cameras, f.job, f.ex);
  auto dist = [&](const GaussianSet& g) {
    double d = 0.0;
    for (std::size_t i = 0; i < g.sh_coeffs.size(); ++i) {
      const double e = g.sh_coeffs[i] - f.scene.gaussians.sh_coeffs[i];
      d += e * e;
    }
    return d;
  };
  EXPECT_LT(dist(held.gaussians), dist(free.gaussians));
}

TEST(Stylize, IsolatedJobsOnDisjointSelectionsCommute) {
  StyleFixture f;
  f.job.iterations = 12;
  f.job.isolate_selection = true;
  StyleJob a = f.job, b = f.job;
  b.selection.clear();
  for (std::size_t i = 0; i < f.scene.labels.size(); ++i)
    if (f.scene.labels[i] == 2) b.selection.push_back(i);
  b.style = Image(32, 32, 0.8f);
  const auto& cams = f.scene.cameras;
  const auto ab = stylize(stylize(f.scene.gaussians, cams, a, f.ex).gaussians, cams, b, f.ex);
  const auto ba = stylize(stylize(f.scene.gaussians, cams, b, f.ex).gaussians, cams, a, f.ex);
  EXPECT_EQ(ab.gaussians.sh_coeffs, ba.gaussians.sh_coeffs);
  EXPECT_NE(ab.gaussians.sh_coeffs, f.scene.gaussians.sh_coeffs);

  // With the full render the second job sees the first one's colors.
  a.isolate_selection = b.isolate_selection = false;
  const auto ab2 = stylize(stylize(f.scene.gaussians, cams, a, f.ex).gaussians, cams, b, f.ex);
  const auto ba2 = stylize(stylize(f.scene.gaussians, cams, b, f.ex).gaussians, cams, a, f.ex);
  EXPECT_NE(ab2.gaussians.sh_coeffs, ba2.gaussians.sh_coeffs);
}

TEST(Stylize, ValidatesJob) {
  StyleFixture f;
  auto bad = f.job;
  bad.iterations = 0;
  EXPECT_THROW(stylize(f.scene.gaussians, f.scene.cameras, bad, f.ex), InvalidArgument);
  bad.iterations = 10001;
  EXPECT_THROW(stylize(f.scene.gaussians, f.scene.cameras, bad, f.ex), InvalidArgument);
  bad = f.job;
  bad.selection.clear();
  EXPECT_THROW(stylize(f.scene.gaussians, f.scene.cameras, bad, f.ex), InvalidArgument);
  bad = f.job;
  bad.selection.push_back(f.scene.gaussians.size());
  EXPECT_THROW(stylize(f.scene.gaussians, f.scene.cameras, bad, f.ex), InvalidArgument);
}

TEST(Stylize, NonFiniteLossAborts) {
  StyleFixture f;
  f.job.style.rgb[0] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(stylize(f.scene.gaussians, f.scene.cameras, f.job, f.ex), DivergenceError);
}

}  // namespace
}  // namespace splat
