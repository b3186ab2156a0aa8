// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "splat/featnet.hpp"

namespace splat::oracle {

/// Exhaustive pairwise evaluation of the style loss in double precision.
inline double brute_force_nnfm(const FeatureStack& r, const FeatureStack& s, bool raw_dot = false) {
  double total = 0.0;
  for (std::size_t l = 0; l < r.maps.size(); ++l) {
    const auto& a = r.maps[l];
    const auto& b = s.maps[l];
    const std::size_t n = a.locations(), m = b.locations(), c = a.channels;
    double layer = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double na = 0.0;
      for (std::size_t k = 0; k < c; ++k) na += double(a.data[k * n + i]) * a.data[k * n + i];
      na = std::sqrt(na);
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < m; ++j) {
        double dot = 0.0, nb = 0.0;
        for (std::size_t k = 0; k < c; ++k) {
          dot += double(a.data[k * n + i]) * b.data[k * m + j];
          nb += double(b.data[k * m + j]) * b.data[k * m + j];
        }
        const double sim = raw_dot ? dot : (na > 0 && nb > 0 ? dot / (na * std::sqrt(nb)) : 0.0);
        best = std::max(best, sim);
      }
      layer += (!raw_dot && na == 0.0) ? 1.0 : 1.0 - best;
    }
    total += layer / static_cast<double>(n);
  }
  return total;
}

/// Index of the best-matching style location for every render location,
/// layer after layer.
inline std::vector<int> nnfm_assignment(const FeatureStack& r, const FeatureStack& s, bool raw_dot = false) {
  std::vector<int> out;
  for (std::size_t l = 0; l < r.maps.size(); ++l) {
    const auto& x = r.maps[l];
    const auto& y = s.maps[l];
    const std::size_t n = x.locations(), m = y.locations();
    for (std::size_t i = 0; i < n; ++i) {
      double best = -std::numeric_limits<double>::infinity();
      int arg = 0;
      for (std::size_t j = 0; j < m; ++j) {
        double dot = 0.0, ny = 0.0;
        for (int k = 0; k < x.channels; ++k) {
          dot += double(x.data[k * n + i]) * y.data[k * m + j];
          ny += double(y.data[k * m + j]) * y.data[k * m + j];
        }
        const double sim = raw_dot ? dot : dot / std::sqrt(ny);
        if (sim > best) best = sim, arg = static_cast<int>(j);
      }
      out.push_back(arg);
    }
  }
  return out;
}

}  // namespace splat::oracle
