// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace splat {

struct AdamGroup {
  std::string name;
  float lr = 0.0f;
  std::vector<float> m;
  std::vector<float> v;
};

/// Adam with per-group learning rates and a shared step counter.
struct AdamState {
  std::vector<AdamGroup> groups;
  std::uint64_t step = 0;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;

  /// Registers a group of `size` parameters; returns its index.
  std::size_t add_group(std::string name, std::size_t size, float lr);
};

struct ParamGroupRef {
  std::span<float> params;
  std::span<const float> grads;
};

/// One bias-corrected Adam update of every group (refs in group order).
/// All gradients are checked before anything is written; a non-finite
/// entry throws DivergenceError naming the group. Groups with lr == 0 are
/// left bitwise untouched.
void adam_step(AdamState& state, std::span<const ParamGroupRef> refs);

}  // namespace splat
