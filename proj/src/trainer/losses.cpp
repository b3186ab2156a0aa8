// SPDX-License-Identifier: Apache-2.0
#include "splat/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "splat/error.hpp"

namespace splat {

PhotometricLoss photometric_loss(const RenderOutput& render, const Image& target) {
  if (render.width != target.width || render.height != target.height ||
      render.color.size() != target.rgb.size()) {
    throw InvalidArgument(fmt::format("photometric_loss: render {}x{} vs target {}x{}",
                                      render.width, render.height, target.width, target.height));
  }
  PhotometricLoss out;
  out.grad.resize(render.color.size());
  const float inv = 1.0f / static_cast<float>(render.color.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < render.color.size(); ++i) {
    const float d = render.color[i] - target.rgb[i];
    sum += std::abs(d);
    out.grad[i] = d > 0.0f ? inv : (d < 0.0f ? -inv : 0.0f);
  }
  out.value = render.color.empty() ? 0.0 : sum / static_cast<double>(render.color.size());
  return out;
}

namespace {

// Adds upstream logit gradient g into feature/classifier gradients.
void logits_backward(const Classifier& cls, std::span<const float> feature,
                     std::span<const float> g, std::span<float> grad_feature,
                     ClassifierGrads& grad_cls) {
  const int c = cls.num_classes;
  for (int j = 0; j < c; ++j) {
    const float gj = g[j];
    if (gj == 0.0f) continue;
    const float* w = &cls.weights[static_cast<std::size_t>(j) * kIdFeatureDim];
    float* gw = &grad_cls.weights[static_cast<std::size_t>(j) * kIdFeatureDim];
    for (int d = 0; d < kIdFeatureDim; ++d) {
      grad_feature[d] += gj * w[d];
      gw[d] += gj * feature[d];
    }
    grad_cls.bias[j] += gj;
  }
}

}  // namespace

CrossEntropyLoss id_cross_entropy(const FeatureRenderOutput& render, const Classifier& classifier,
                                  const IdMap& mask) {
  if (render.width != mask.width || render.height != mask.height) {
    throw InvalidArgument(fmt::format("id_cross_entropy: render {}x{} vs mask {}x{}", render.width,
                                      render.height, mask.width, mask.height));
  }
  const int c = classifier.num_classes;
  CrossEntropyLoss out;
  out.grad_features.assign(render.features.size(), 0.0f);
  out.grad_classifier = ClassifierGrads(classifier);
  for (auto id : mask.ids) {
    if (id != kIgnoreId && id >= c) {
      throw InvalidArgument(
          fmt::format("id_cross_entropy: mask ID {} but classifier has {} classes", id, c));
    }
  }
  for (auto id : mask.ids) out.counted_pixels += id != kIgnoreId;
  if (out.counted_pixels == 0) return out;

  const float inv = 1.0f / static_cast<float>(out.counted_pixels);
  std::vector<float> p(c);
  double sum = 0.0;
  for (std::size_t px = 0; px < mask.ids.size(); ++px) {
    const auto id = mask.ids[px];
    if (id == kIgnoreId) continue;
    std::span<const float> f(&render.features[px * kIdFeatureDim], kIdFeatureDim);
    classifier.logits(f, p);
    const float mx = *std::max_element(p.begin(), p.end());
    double z = 0.0;
    for (float v : p) z += std::exp(static_cast<double>(v - mx));
    sum += std::log(z) - static_cast<double>(p[id] - mx);
    for (int j = 0; j < c; ++j) {
      p[j] = static_cast<float>(std::exp(static_cast<double>(p[j] - mx)) / z) * inv;
    }
    p[id] -= inv;
    logits_backward(classifier, f, p,
                    std::span<float>(&out.grad_features[px * kIdFeatureDim], kIdFeatureDim),
                    out.grad_classifier);
  }
  out.value = sum / static_cast<double>(out.counted_pixels);
  return out;
}

std::vector<std::vector<std::uint32_t>> nearest_neighbors(std::span<const float> positions,
                                                          std::span<const std::uint32_t> queries,
                                                          int k) {
  const std::size_t n = positions.size() / 3;
  std::vector<std::vector<std::uint32_t>> out(queries.size());
  std::vector<std::pair<float, std::uint32_t>> dist;
  dist.reserve(n);
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const std::uint32_t s = queries[q];
    dist.clear();
    for (std::uint32_t j = 0; j < n; ++j) {
      if (j == s) continue;
      const float dx = positions[3 * j] - positions[3 * s];
      const float dy = positions[3 * j + 1] - positions[3 * s + 1];
      const float dz = positions[3 * j + 2] - positions[3 * s + 2];
      dist.emplace_back(dx * dx + dy * dy + dz * dz, j);
    }
    const std::size_t kk = std::min<std::size_t>(k, dist.size());
    std::partial_sort(dist.begin(), dist.begin() + kk, dist.end());
    out[q].reserve(kk);
    for (std::size_t i = 0; i < kk; ++i) out[q].push_back(dist[i].second);
  }
  return out;
}

SpatialLoss spatial_consistency_loss(const GaussianSet& gaussians, const Classifier& classifier,
                                     int sample_size, int k, std::uint64_t seed) {
  const std::size_t n = gaussians.size();
  if (k < 1 || n <= static_cast<std::size_t>(k)) {
    throw InvalidArgument(
        fmt::format("spatial_consistency_loss: need more than k={} Gaussians, have {}", k, n));
  }
  if (sample_size < 1) throw InvalidArgument("spatial_consistency_loss: sample size must be >= 1");

  std::vector<std::uint32_t> sample(n);
  std::iota(sample.begin(), sample.end(), 0u);
  if (static_cast<std::size_t>(sample_size) < n) {
    std::mt19937_64 rng(seed);
    std::shuffle(sample.begin(), sample.end(), rng);
    sample.resize(sample_size);
    std::sort(sample.begin(), sample.end());
  }
  const auto neighbors = nearest_neighbors(gaussians.positions, sample, k);

  const int c = classifier.num_classes;
  // Classifier softmax and log-softmax for every Gaussian that appears.
  std::vector<float> logp(n * c, 0.0f);
  std::vector<char> have(n, 0);
  std::vector<float> tmp(c);
  auto ensure = [&](std::uint32_t i) {
    if (have[i]) return;
    have[i] = 1;
    classifier.logits(gaussians.id_feature(i), tmp);
    const float mx = *std::max_element(tmp.begin(), tmp.end());
    double z = 0.0;
    for (float v : tmp) z += std::exp(static_cast<double>(v - mx));
    const float lz = static_cast<float>(std::log(z)) + mx;
    for (int j = 0; j < c; ++j) logp[i * c + j] = tmp[j] - lz;
  };

  SpatialLoss out;
  out.grad_features.assign(n * kIdFeatureDim, 0.0f);
  out.grad_classifier = ClassifierGrads(classifier);
  std::vector<float> grad_logits(n * c, 0.0f);
  std::size_t pairs = 0;
  for (const auto& nb : neighbors) pairs += nb.size();
  const double inv = 1.0 / static_cast<double>(pairs);

  double sum = 0.0;
  for (std::size_t q = 0; q < sample.size(); ++q) {
    const std::uint32_t s = sample[q];
    ensure(s);
    const float* ls = &logp[s * c];
    for (std::uint32_t j : neighbors[q]) {
      ensure(j);
      const float* lj = &logp[j * c];
      double kl = 0.0;
      for (int a = 0; a < c; ++a) kl += std::exp(static_cast<double>(ls[a])) * (ls[a] - lj[a]);
      sum += kl;
      for (int a = 0; a < c; ++a) {
        const double ps = std::exp(static_cast<double>(ls[a]));
        const double pj = std::exp(static_cast<double>(lj[a]));
        grad_logits[s * c + a] += static_cast<float>(inv * ps * ((ls[a] - lj[a]) - kl));
        grad_logits[j * c + a] += static_cast<float>(inv * (pj - ps));
      }
    }
  }
  out.value = sum * inv;
  for (std::size_t i = 0; i < n; ++i) {
    if (!have[i]) continue;
    logits_backward(classifier, gaussians.id_feature(i),
                    std::span<const float>(&grad_logits[i * c], c),
                    std::span<float>(&out.grad_features[i * kIdFeatureDim], kIdFeatureDim),
                    out.grad_classifier);
  }
  return out;
}

}  // namespace splat
