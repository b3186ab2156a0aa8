// SPDX-License-Identifier: Apache-2.0
#include "splat/adam.hpp"

#include <cmath>

#include <fmt/format.h>

#include "splat/error.hpp"

namespace splat {

std::size_t AdamState::add_group(std::string name, std::size_t size, float lr) {
  groups.push_back({std::move(name), lr, std::vector<float>(size, 0.0f),
                    std::vector<float>(size, 0.0f)});
  return groups.size() - 1;
}

void adam_step(AdamState& state, std::span<const ParamGroupRef> refs) {
  if (refs.size() != state.groups.size()) {
    throw InvalidArgument(fmt::format("adam_step: {} parameter groups for {} optimizer groups",
                                      refs.size(), state.groups.size()));
  }
  for (std::size_t g = 0; g < refs.size(); ++g) {
    const AdamGroup& group = state.groups[g];
    if (refs[g].params.size() != group.m.size() || refs[g].grads.size() != group.m.size()) {
      throw InvalidArgument(fmt::format("adam_step: group '{}' expects {} values, got {}/{}",
                                        group.name, group.m.size(), refs[g].params.size(),
                                        refs[g].grads.size()));
    }
    for (std::size_t i = 0; i < refs[g].grads.size(); ++i) {
      if (!std::isfinite(refs[g].grads[i])) {
        throw DivergenceError(fmt::format("non-finite gradient in group '{}' at index {} (step {})",
                                          group.name, i, state.step + 1));
      }
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const float bc1 = static_cast<float>(1.0 - std::pow(static_cast<double>(state.beta1), t));
  const float bc2 = static_cast<float>(1.0 - std::pow(static_cast<double>(state.beta2), t));
  for (std::size_t g = 0; g < refs.size(); ++g) {
    AdamGroup& group = state.groups[g];
    if (group.lr == 0.0f) continue;
    auto p = refs[g].params;
    auto grad = refs[g].grads;
    for (std::size_t i = 0; i < p.size(); ++i) {
      group.m[i] = state.beta1 * group.m[i] + (1.0f - state.beta1) * grad[i];
      group.v[i] = state.beta2 * group.v[i] + (1.0f - state.beta2) * grad[i] * grad[i];
      const float mhat = group.m[i] / bc1;
      const float vhat = group.v[i] / bc2;
      p[i] -= group.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

}  // namespace splat
