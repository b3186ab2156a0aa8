// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "splat/classifier.hpp"
#include "splat/gaussians.hpp"

namespace splat {

inline constexpr float kDefaultThreshold = 0.6f;
inline constexpr int kDefaultOutlierNeighbors = 20;
inline constexpr float kDefaultOutlierStd = 2.0f;

struct OutlierReport {
  std::vector<std::size_t> kept;  // positions into the input list
  std::size_t removed = 0;
  bool skipped = false;  // too few points for k neighbors
  double mean_distance = 0.0;
  double std_distance = 0.0;
};

struct ObjectSelection {
  std::vector<int> object_ids;
  std::vector<std::size_t> indices;  // sorted, unique
  /// Max over requested IDs of the class probability, per Gaussian.
  std::vector<float> probability;
  std::size_t passed_threshold = 0;
  std::size_t filtered_by_threshold = 0;
  std::size_t removed_as_outliers = 0;
  bool outlier_removal_skipped = false;
  bool empty_warning = false;
  /// Gaussians passing the threshold per requested ID (argmax over requested).
  std::vector<std::size_t> per_id_counts;
};

/// N x num_classes row-major softmax probabilities of the raw id features.
std::vector<float> classify_gaussians(const GaussianSet& gaussians, const Classifier& classifier);

/// For each point, mean distance to its k nearest neighbors in the list;
/// drops points above mean + std_factor * std of those means. Lists of at
/// most k points are returned unchanged with `skipped` set.
OutlierReport remove_outliers(std::span<const float> positions, int k, float std_factor);

/// Threshold on the max probability over `object_ids`, then outlier removal.
/// Throws InvalidArgument for IDs outside the classifier or a threshold
/// outside (0, 1].
ObjectSelection select_object(const GaussianSet& gaussians, const Classifier& classifier,
                              std::span<const int> object_ids, float threshold = kDefaultThreshold,
                              int k = kDefaultOutlierNeighbors,
                              float std_factor = kDefaultOutlierStd);

/// Gaussians passing the threshold only (no outlier removal).
std::vector<std::size_t> threshold_selection(const GaussianSet& gaussians,
                                             const Classifier& classifier,
                                             std::span<const int> object_ids, float threshold);

/// Parses "2,5" into {2, 5}; throws InvalidArgument on malformed input.
std::vector<int> parse_id_list(const std::string& text);

}  // namespace splat
