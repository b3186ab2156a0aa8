// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "splat/featnet.hpp"

namespace splat::oracle {

// Central differences with a margin check: entries whose perturbation changes
// the depth order or which (pixel, Gaussian) pairs are blended or clamped are
// excluded (NaN). Those are the discontinuities of the compositor.
struct CheckedGradient {
  std::vector<double> numeric;
  std::size_t excluded = 0;
};

template <typename Render, typename Loss>
CheckedGradient checked_difference(std::vector<float>& params, Render render, Loss loss) {
  CheckedGradient out;
  out.numeric.resize(params.size());
  const auto base = render();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const float x = params[i];
    const float h = 1e-3f * std::max(1.0f, std::abs(x));
    params[i] = x + h;
    const auto plus = render();
    params[i] = x - h;
    const auto minus = render();
    params[i] = x;
    const bool stable = plus.state.visible.indices == base.state.visible.indices &&
                        minus.state.visible.indices == base.state.visible.indices &&
                        plus.accepted_splats == base.accepted_splats &&
                        minus.accepted_splats == base.accepted_splats &&
                        plus.clamped_splats == base.clamped_splats &&
                        minus.clamped_splats == base.clamped_splats &&
                        plus.per_pixel_contributor_count == base.per_pixel_contributor_count &&
                        minus.per_pixel_contributor_count == base.per_pixel_contributor_count &&
                        plus.state.last_contributor == base.state.last_contributor &&
                        minus.state.last_contributor == base.state.last_contributor;
    if (!stable) {
      out.numeric[i] = std::nan("");
      ++out.excluded;
      continue;
    }
    out.numeric[i] = (loss(plus) - loss(minus)) / (2.0 * h);
  }
  return out;
}

/// ReLU signs and pooling winners of one extraction; perturbations that
/// change this pattern cross a kink.
inline std::vector<std::uint32_t> activation_pattern(const FeatureExtractor& ex, const ExtractCache& c) {
  std::vector<std::uint32_t> out;
  for (std::size_t i = 0; i < c.argmax.size(); ++i) {
    if (ex.layers()[i].kind == LayerKind::kRelu)
      for (float v : c.activations[i]) out.push_back(v > 0.0f);
    out.insert(out.end(), c.argmax[i].begin(), c.argmax[i].end());
  }
  return out;
}

}  // namespace splat::oracle
