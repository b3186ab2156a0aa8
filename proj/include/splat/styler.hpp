// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "splat/camera.hpp"
#include "splat/featnet.hpp"
#include "splat/gaussians.hpp"
#include "splat/image_io.hpp"

namespace splat {

struct NnfmResult {
  double total = 0.0;
  std::vector<double> per_layer;
  std::vector<FeatureMap> grads;  // d total / d render features, per layer
};

/// Per layer: mean over render locations i of 1 - max_j cos(F_r(i), F_s(j)),
/// summed over layers. Zero-norm render vectors count 1 with zero gradient.
/// With `raw_dot` the cosine is replaced by the unnormalized dot product.
NnfmResult nnfm_loss(const FeatureStack& render, const FeatureStack& style, bool raw_dot = false);

/// Bilinear resize of the style image by `scale`, then one extraction.
FeatureStack prepare_style_features(const FeatureExtractor& extractor, const Image& style,
                                    float scale, std::span<const int> layers);

/// Evenly spaced indices floor(i * V / ceil(fraction * V)), sorted, unique.
std::vector<int> select_views(int num_views, float fraction);

inline constexpr int kDefaultStyleIterations = 800;
inline constexpr float kDefaultStyleLr = 0.05f;
inline constexpr float kDefaultViewFraction = 0.25f;

struct StyleJob {
  std::vector<std::size_t> selection;  // Gaussian indices whose SH may change
  Image style;
  float style_scale = 1.0f;
  std::vector<int> layers{11, 13, 15};
  float lr = kDefaultStyleLr;
  int iterations = kDefaultStyleIterations;
  float view_fraction = kDefaultViewFraction;
  std::uint64_t seed = 0;
  bool raw_dot = false;
  /// Weight of an L1 term towards the pre-stylization renders; 0 disables.
  float content_weight = 0.0f;
  Vec3 background = Vec3::Zero();
  /// Composite non-selected Gaussians in the background color while
  /// optimizing. They still occlude, but their SH no longer enters the loss,
  /// so jobs on disjoint selections commute exactly.
  bool isolate_selection = false;

  void validate() const;
};

struct StyleLogRecord {
  int iteration = 0;
  int view = 0;
  std::vector<double> per_layer;
  double total = 0.0;
};

struct StyleResult {
  GaussianSet gaussians;
  std::vector<int> views;
  std::vector<StyleLogRecord> log;
};

/// Optimizes only the SH coefficients of the selected Gaussians against the
/// style image with a fresh Adam state; every other value is copied
/// bitwise. Views are visited round-robin over the evenly spaced subset.
StyleResult stylize(const GaussianSet& gaussians, const std::vector<Camera>& cameras,
                    const StyleJob& job, const FeatureExtractor& extractor);

/// Mean NNFM loss over the given views.
double mean_nnfm(const GaussianSet& gaussians, const std::vector<Camera>& cameras,
                 const std::vector<int>& views, const FeatureStack& style,
                 const FeatureExtractor& extractor, std::span<const int> layers,
                 const Vec3& background = Vec3::Zero(), bool raw_dot = false);

}  // namespace splat
