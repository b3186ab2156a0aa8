// SPDX-License-Identifier: Apache-2.0
#include "splat/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "splat/error.hpp"

namespace splat {

Classifier::Classifier(int classes)
    : num_classes(classes),
      weights(static_cast<std::size_t>(classes) * kIdFeatureDim, 0.0f),
      bias(classes, 0.0f) {
  if (classes < 1) throw InvalidArgument("classifier needs at least one class");
}

Classifier Classifier::random(int classes, std::uint64_t seed, float stddev) {
  Classifier c(classes);
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, stddev);
  for (float& w : c.weights) w = normal(rng);
  return c;
}

void Classifier::logits(std::span<const float> feature, std::span<float> out) const {
  for (int k = 0; k < num_classes; ++k) {
    const float* row = &weights[static_cast<std::size_t>(k) * kIdFeatureDim];
    float acc = bias[k];
    for (int d = 0; d < kIdFeatureDim; ++d) acc += row[d] * feature[d];
    out[k] = acc;
  }
}

void Classifier::probabilities(std::span<const float> feature, std::span<float> out) const {
  logits(feature, out);
  softmax(out.first(num_classes));
}

int Classifier::argmax(std::span<const float> feature) const {
  std::vector<float> l(num_classes);
  logits(feature, l);
  return static_cast<int>(std::max_element(l.begin(), l.end()) - l.begin());
}

void Classifier::validate() const {
  if (num_classes < 1 || weights.size() != static_cast<std::size_t>(num_classes) * kIdFeatureDim ||
      bias.size() != static_cast<std::size_t>(num_classes)) {
    throw InvalidArgument(fmt::format("classifier shape mismatch: {} classes, {} weights, {} biases",
                                      num_classes, weights.size(), bias.size()));
  }
}

void softmax(std::span<float> values) {
  if (values.empty()) return;
  const float peak = *std::max_element(values.begin(), values.end());
  float sum = 0.0f;
  for (float& v : values) {
    v = std::exp(v - peak);
    sum += v;
  }
  for (float& v : values) v /= sum;
}

}  // namespace splat
