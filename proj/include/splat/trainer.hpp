// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "splat/camera.hpp"
#include "splat/checkpoint.hpp"
#include "splat/classifier.hpp"
#include "splat/gaussians.hpp"
#include "splat/image_io.hpp"
#include "splat/ply.hpp"
#include "splat/scene_io.hpp"

namespace splat {

struct LearningRates {
  float positions = 1.6e-4f;
  float rotations = 1e-3f;
  float log_scales = 5e-3f;
  float opacity = 5e-2f;
  float sh_dc = 2.5e-3f;
  float sh_rest = 2.5e-3f / 20.0f;
  float id_features = 2.5e-3f;
  float classifier = 5e-3f;
};

struct TrainConfig {
  int iterations = 30000;
  LearningRates lr;
  /// Multiply the position rate by the camera-ring extent (1.1 x largest
  /// camera distance from the mean camera center).
  bool scale_position_lr = true;
  float lambda_ce = 1.0f;
  float lambda_3d = 1.0f;
  int knn = 16;
  int sample_size = 1000;
  std::uint64_t seed = 0;
  /// Snapshot callback cadence in iterations; 0 disables snapshots.
  int snapshot_every = 0;
  /// Drop Gaussians with opacity below prune_opacity every prune_every
  /// iterations; 0 disables pruning.
  int prune_every = 0;
  float prune_opacity = 0.005f;
  Vec3 background = Vec3::Zero();
  int sh_degree = 1;

  /// Throws InvalidArgument on out-of-range values.
  void validate() const;
  /// Stable FNV-1a hash of every field.
  std::uint64_t hash() const;
};

struct TrainView {
  Camera camera;
  Image image;
  std::optional<IdMap> mask;
};

struct TrainLogRecord {
  int iteration = 0;
  int view = 0;
  double photometric = 0.0;
  double cross_entropy = 0.0;
  double spatial = 0.0;
  double total = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  GaussianSet gaussians;
  Classifier classifier;
  TrainingMetadata metadata;
  std::vector<TrainLogRecord> log;
};

struct TrainHooks {
  std::function<void(const TrainLogRecord&)> on_log;
  std::function<void(int iteration, const GaussianSet&, const Classifier&)> on_snapshot;
};

/// Gaussians at the cloud points: isotropic scale from the mean distance to
/// the 3 nearest neighbors, identity rotation, opacity 0.1, SH DC from the
/// point color, small seeded random identity features.
GaussianSet initialize_from_points(const PointCloud& cloud, int sh_degree, std::uint64_t seed);

/// Camera-ring extent used to scale the position learning rate.
float camera_extent(const std::vector<Camera>& cameras);

/// Optimizes `init` (and a classifier over `num_classes`, if any view has a
/// mask) against the views. Views are visited round-robin in a seeded
/// shuffle per epoch. Throws DivergenceError on a non-finite loss.
TrainResult train(const std::vector<TrainView>& views, int num_classes, GaussianSet init,
                  const TrainConfig& config, const TrainHooks& hooks = {},
                  std::optional<Classifier> init_classifier = std::nullopt);

/// Loads every frame of `scene` and trains from its points.ply (DataError if
/// the scene has none).
TrainResult train(const SceneData& scene, const TrainConfig& config, const TrainHooks& hooks = {});

std::vector<TrainView> load_train_views(const SceneData& scene, int* num_classes);

}  // namespace splat
