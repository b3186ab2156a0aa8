// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "splat/classifier.hpp"
#include "splat/gaussians.hpp"
#include "splat/image_io.hpp"
#include "splat/raster.hpp"

namespace splat {

struct PhotometricLoss {
  double value = 0.0;
  std::vector<float> grad;  // H x W x 3
};

/// Mean absolute error over pixels and channels.
PhotometricLoss photometric_loss(const RenderOutput& render, const Image& target);

struct ClassifierGrads {
  std::vector<float> weights;
  std::vector<float> bias;

  ClassifierGrads() = default;
  explicit ClassifierGrads(const Classifier& like)
      : weights(like.weights.size(), 0.0f), bias(like.bias.size(), 0.0f) {}
};

struct CrossEntropyLoss {
  double value = 0.0;
  std::size_t counted_pixels = 0;
  std::vector<float> grad_features;  // H x W x 16
  ClassifierGrads grad_classifier;
};

/// Mean softmax cross-entropy between the classified rendered features and
/// the mask labels, skipping kIgnoreId pixels. No counted pixels gives 0.
CrossEntropyLoss id_cross_entropy(const FeatureRenderOutput& render, const Classifier& classifier,
                                  const IdMap& mask);

struct SpatialLoss {
  double value = 0.0;
  std::vector<float> grad_features;  // N x 16
  ClassifierGrads grad_classifier;
};

/// Mean KL(p_s || p_j) between the classifier softmax of each sampled
/// Gaussian s and each of its k nearest neighbors j (by position, exact).
/// Samples min(sample_size, N) distinct Gaussians with the given seed.
SpatialLoss spatial_consistency_loss(const GaussianSet& gaussians, const Classifier& classifier,
                                     int sample_size, int k, std::uint64_t seed);

/// Indices of the k nearest other points for each query, nearest first, ties
/// broken by index. Brute force.
std::vector<std::vector<std::uint32_t>> nearest_neighbors(std::span<const float> positions,
                                                          std::span<const std::uint32_t> queries,
                                                          int k);

}  // namespace splat
