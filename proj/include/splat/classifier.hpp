// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "splat/gaussians.hpp"

namespace splat {

/// Linear map from identity features to class logits: logits = W e + b.
struct Classifier {
  int num_classes = 0;
  std::vector<float> weights;  // num_classes x kIdFeatureDim, row-major
  std::vector<float> bias;     // num_classes

  Classifier() = default;
  explicit Classifier(int classes);

  /// Small seeded random weights, zero bias.
  static Classifier random(int classes, std::uint64_t seed, float stddev = 0.1f);

  void logits(std::span<const float> feature, std::span<float> out) const;
  /// Softmax of the logits, numerically stabilized.
  void probabilities(std::span<const float> feature, std::span<float> out) const;
  int argmax(std::span<const float> feature) const;

  void validate() const;
};

/// In-place softmax.
void softmax(std::span<float> values);

}  // namespace splat
