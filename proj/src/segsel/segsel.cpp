// SPDX-License-Identifier: Apache-2.0
#include "splat/segsel.hpp"

#include <algorithm>
#include <charconv>
#include <limits>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "splat/error.hpp"
#include "splat/losses.hpp"

namespace splat {

std::vector<float> classify_gaussians(const GaussianSet& gaussians, const Classifier& classifier) {
  classifier.validate();
  const int c = classifier.num_classes;
  std::vector<float> out(gaussians.size() * c);
  for (std::size_t i = 0; i < gaussians.size(); ++i) {
    classifier.probabilities(gaussians.id_feature(i), std::span<float>(&out[i * c], c));
  }
  return out;
}

OutlierReport remove_outliers(std::span<const float> positions, int k, float std_factor) {
  const std::size_t n = positions.size() / 3;
  OutlierReport rep;
  rep.kept.resize(n);
  std::iota(rep.kept.begin(), rep.kept.end(), std::size_t{0});
  if (k < 1) throw InvalidArgument("outlier removal needs k >= 1");
  if (n <= static_cast<std::size_t>(k)) {
    rep.skipped = true;
    return rep;
  }
  std::vector<std::uint32_t> all(n);
  std::iota(all.begin(), all.end(), 0u);
  const auto nb = nearest_neighbors(positions, all, k);
  std::vector<double> mean(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (auto j : nb[i]) {
      const double dx = positions[3 * j] - positions[3 * i];
      const double dy = positions[3 * j + 1] - positions[3 * i + 1];
      const double dz = positions[3 * j + 2] - positions[3 * i + 2];
      s += std::sqrt(dx * dx + dy * dy + dz * dz);
    }
    mean[i] = s / static_cast<double>(nb[i].size());
  }
  // Sum in sorted order so the statistics do not depend on input order.
  std::vector<double> sorted = mean;
  std::sort(sorted.begin(), sorted.end());
  double mu = 0.0;
  for (double v : sorted) mu += v;
  mu /= static_cast<double>(n);
  double var = 0.0;
  for (double v : sorted) var += (v - mu) * (v - mu);
  const double sigma = std::sqrt(var / static_cast<double>(n - 1));
  rep.mean_distance = mu;
  rep.std_distance = sigma;
  if (!std::isfinite(std_factor)) return rep;
  const double limit = mu + static_cast<double>(std_factor) * sigma;
  rep.kept.clear();
  for (std::size_t i = 0; i < n; ++i) {
    if (mean[i] <= limit) rep.kept.push_back(i);
  }
  rep.removed = n - rep.kept.size();
  return rep;
}

namespace {

void check_ids(const Classifier& classifier, std::span<const int> ids) {
  if (ids.empty()) throw InvalidArgument("no object IDs requested");
  for (int id : ids) {
    if (id < 0 || id >= classifier.num_classes) {
      throw InvalidArgument(fmt::format("unknown object ID {} (classifier has IDs 0..{})", id,
                                        classifier.num_classes - 1));
    }
  }
}

}  // namespace

std::vector<std::size_t> threshold_selection(const GaussianSet& gaussians,
                                             const Classifier& classifier,
                                             std::span<const int> object_ids, float threshold) {
  return select_object(gaussians, classifier, object_ids, threshold, 1,
                       std::numeric_limits<float>::infinity())
      .indices;
}

ObjectSelection select_object(const GaussianSet& gaussians, const Classifier& classifier,
                              std::span<const int> object_ids, float threshold, int k,
                              float std_factor) {
  if (!(threshold > 0.0f && threshold <= 1.0f)) {
    throw InvalidArgument(fmt::format("threshold {} outside (0, 1]", threshold));
  }
  check_ids(classifier, object_ids);
  const int c = classifier.num_classes;
  const std::vector<float> probs = classify_gaussians(gaussians, classifier);

  ObjectSelection sel;
  sel.object_ids.assign(object_ids.begin(), object_ids.end());
  sel.probability.resize(gaussians.size());
  sel.per_id_counts.assign(object_ids.size(), 0);
  std::vector<std::size_t> passed;
  for (std::size_t i = 0; i < gaussians.size(); ++i) {
    float best = -1.0f;
    std::size_t which = 0;
    for (std::size_t r = 0; r < object_ids.size(); ++r) {
      const float p = probs[i * c + object_ids[r]];
      if (p > best) {
        best = p;
        which = r;
      }
    }
    sel.probability[i] = best;
    if (best >= threshold) {
      passed.push_back(i);
      ++sel.per_id_counts[which];
    }
  }
  sel.passed_threshold = passed.size();
  sel.filtered_by_threshold = gaussians.size() - passed.size();

  std::vector<float> pos(3 * passed.size());
  for (std::size_t j = 0; j < passed.size(); ++j)
    for (int d = 0; d < 3; ++d) pos[3 * j + d] = gaussians.positions[3 * passed[j] + d];
  const OutlierReport rep = remove_outliers(pos, k, std_factor);
  for (std::size_t j : rep.kept) sel.indices.push_back(passed[j]);
  sel.removed_as_outliers = rep.removed;
  sel.outlier_removal_skipped = rep.skipped;
  sel.empty_warning = sel.indices.empty();
  return sel;
}

std::vector<int> parse_id_list(const std::string& text) {
  std::vector<int> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find(',', start), text.size());
    std::string tok = text.substr(start, end - start);
    tok.erase(0, tok.find_first_not_of(" \t"));
    tok.erase(tok.find_last_not_of(" \t") + 1);
    int v = 0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (tok.empty() || ec != std::errc() || ptr != tok.data() + tok.size()) {
      throw InvalidArgument(fmt::format("malformed ID list '{}'", text));
    }
    out.push_back(v);
    start = end + 1;
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace splat
