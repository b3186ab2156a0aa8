// SPDX-License-Identifier: Apache-2.0
#include "splat/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <memory>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "splat/adam.hpp"
#include "splat/error.hpp"
#include "splat/losses.hpp"
#include "splat/raster.hpp"
#include "splat/sh.hpp"

namespace splat {

void TrainConfig::validate() const {
  if (iterations <= 0) throw InvalidArgument("iterations must be > 0");
  if (!(lambda_ce >= 0.0f) || !(lambda_3d >= 0.0f)) {
    throw InvalidArgument("loss weights must be >= 0");
  }
  if (knn < 1) throw InvalidArgument("knn must be >= 1");
  if (sample_size < 1) throw InvalidArgument("sample size must be >= 1");
  if (snapshot_every < 0 || prune_every < 0) {
    throw InvalidArgument("snapshot and prune cadences must be >= 0");
  }
  if (sh_degree < 0 || sh_degree > kMaxShDegree) throw InvalidArgument("bad SH degree");
  const float rates[] = {lr.positions, lr.rotations, lr.log_scales, lr.opacity,
                         lr.sh_dc,     lr.sh_rest,   lr.id_features, lr.classifier};
  for (float r : rates) {
    if (!(r >= 0.0f) || !std::isfinite(r)) throw InvalidArgument("learning rates must be >= 0");
  }
}

namespace {

struct Fnv {
  std::uint64_t h = 1469598103934665603ull;
  template <typename T>
  void add(const T& v) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 1099511628211ull;
    }
  }
};

}  // namespace

std::uint64_t TrainConfig::hash() const {
  Fnv f;
  f.add(iterations);
  f.add(lr.positions);
  f.add(lr.rotations);
  f.add(lr.log_scales);
  f.add(lr.opacity);
  f.add(lr.sh_dc);
  f.add(lr.sh_rest);
  f.add(lr.id_features);
  f.add(lr.classifier);
  f.add(scale_position_lr);
  f.add(lambda_ce);
  f.add(lambda_3d);
  f.add(knn);
  f.add(sample_size);
  f.add(seed);
  f.add(prune_every);
  f.add(prune_opacity);
  for (int c = 0; c < 3; ++c) f.add(background[c]);
  f.add(sh_degree);
  return f.h;
}

GaussianSet initialize_from_points(const PointCloud& cloud, int sh_degree, std::uint64_t seed) {
  const std::size_t n = cloud.size();
  if (n == 0) throw DataError("point cloud is empty");
  GaussianSet g(n, sh_degree);
  g.positions = cloud.positions;

  std::vector<std::uint32_t> all(n);
  std::iota(all.begin(), all.end(), 0u);
  const int k = static_cast<int>(std::min<std::size_t>(3, n - 1));
  const auto nb = k > 0 ? nearest_neighbors(cloud.positions, all, k)
                        : std::vector<std::vector<std::uint32_t>>(n);
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, 0.1f);
  const float logit = inverse_sigmoid(0.1f);
  for (std::size_t i = 0; i < n; ++i) {
    float mean = 0.0f;
    for (auto j : nb[i]) mean += (g.position(j) - g.position(i)).norm();
    mean = nb[i].empty() ? 0.1f : std::max(mean / static_cast<float>(nb[i].size()), 1e-4f);
    g.set_log_scale(i, Vec3::Constant(std::log(mean)));
    g.opacity_logits[i] = logit;
    auto sh = g.sh(i);
    for (int c = 0; c < 3; ++c) sh[c] = rgb_to_sh_dc(cloud.colors[3 * i + c]);
    for (int d = 0; d < kIdFeatureDim; ++d) g.id_features[i * kIdFeatureDim + d] = normal(rng);
  }
  return g;
}

float camera_extent(const std::vector<Camera>& cameras) {
  if (cameras.empty()) return 1.0f;
  Vec3 mean = Vec3::Zero();
  for (const auto& c : cameras) mean += c.center();
  mean /= static_cast<float>(cameras.size());
  float r = 0.0f;
  for (const auto& c : cameras) r = std::max(r, (c.center() - mean).norm());
  return 1.1f * std::max(r, 1e-3f);
}

namespace {

// Optimizer over the Gaussian arrays plus the classifier. SH DC and the
// higher-order SH terms are separate groups gathered from the interleaved
// layout.
class SceneOptimizer {
 public:
  SceneOptimizer(const GaussianSet& g, const Classifier& cls, const LearningRates& lr,
                 float position_scale) {
    const std::size_t n = g.size();
    const std::size_t rest = static_cast<std::size_t>(g.sh_per_gaussian() - 3);
    adam_.add_group("positions", 3 * n, lr.positions * position_scale);
    adam_.add_group("rotations", 4 * n, lr.rotations);
    adam_.add_group("log_scales", 3 * n, lr.log_scales);
    adam_.add_group("opacity_logits", n, lr.opacity);
    adam_.add_group("sh_dc", 3 * n, lr.sh_dc);
    adam_.add_group("sh_rest", rest * n, lr.sh_rest);
    adam_.add_group("id_features", kIdFeatureDim * n, lr.id_features);
    adam_.add_group("classifier_weights", cls.weights.size(), lr.classifier);
    adam_.add_group("classifier_bias", cls.bias.size(), lr.classifier);
  }

  void step(GaussianSet& g, const GaussianGrads& grads, Classifier& cls,
            const ClassifierGrads& cls_grads) {
    const std::size_t n = g.size();
    const std::size_t k = static_cast<std::size_t>(g.sh_per_gaussian());
    dc_.resize(3 * n);
    rest_.resize((k - 3) * n);
    dc_grad_.resize(3 * n);
    rest_grad_.resize((k - 3) * n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        const float p = g.sh_coeffs[i * k + j];
        const float d = grads.sh_coeffs[i * k + j];
        if (j < 3) {
          dc_[3 * i + j] = p;
          dc_grad_[3 * i + j] = d;
        } else {
          rest_[(k - 3) * i + j - 3] = p;
          rest_grad_[(k - 3) * i + j - 3] = d;
        }
      }
    }
    const ParamGroupRef refs[] = {
        {g.positions, grads.positions},       {g.rotations, grads.rotations},
        {g.log_scales, grads.log_scales},     {g.opacity_logits, grads.opacity_logits},
        {dc_, dc_grad_},                      {rest_, rest_grad_},
        {g.id_features, grads.id_features},   {cls.weights, cls_grads.weights},
        {cls.bias, cls_grads.bias},
    };
    adam_step(adam_, refs);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        g.sh_coeffs[i * k + j] = j < 3 ? dc_[3 * i + j] : rest_[(k - 3) * i + j - 3];
      }
    }
    g.renormalize_rotations();
  }

  // Keeps only Gaussians with keep[i]; moment buffers follow.
  void compact(const std::vector<char>& keep) {
    const std::size_t n = keep.size();
    for (std::size_t gi = 0; gi < 7; ++gi) {
      AdamGroup& group = adam_.groups[gi];
      const std::size_t stride = group.m.size() / std::max<std::size_t>(n, 1);
      std::size_t w = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (!keep[i]) continue;
        for (std::size_t s = 0; s < stride; ++s) {
          group.m[w * stride + s] = group.m[i * stride + s];
          group.v[w * stride + s] = group.v[i * stride + s];
        }
        ++w;
      }
      group.m.resize(w * stride);
      group.v.resize(w * stride);
    }
  }

 private:
  AdamState adam_;
  std::vector<float> dc_, rest_, dc_grad_, rest_grad_;
};

void check_finite(double value, const char* what, int iteration, int view) {
  if (!std::isfinite(value)) {
    throw DivergenceError(
        fmt::format("non-finite {} loss at iteration {} (view {})", what, iteration, view));
  }
}

}  // namespace

TrainResult train(const std::vector<TrainView>& views, int num_classes, GaussianSet init,
                  const TrainConfig& config, const TrainHooks& hooks,
                  std::optional<Classifier> init_classifier) {
  config.validate();
  if (views.empty()) throw InvalidArgument("train: no views");
  init.validate();
  const bool has_masks = std::any_of(views.begin(), views.end(),
                                     [](const TrainView& v) { return v.mask.has_value(); });
  const bool use_masks = has_masks && num_classes > 0;

  TrainResult result;
  GaussianSet& g = result.gaussians;
  g = std::move(init);
  Classifier& cls = result.classifier;
  if (init_classifier) {
    cls = *init_classifier;
  } else if (use_masks) {
    cls = Classifier::random(num_classes, config.seed ^ 0x5eed);
  }

  std::vector<Camera> cams;
  for (const auto& v : views) cams.push_back(v.camera);
  const float position_scale = config.scale_position_lr ? camera_extent(cams) : 1.0f;

  LearningRates lr = config.lr;
  if (!use_masks) lr.id_features = lr.classifier = 0.0f;
  auto opt = std::make_unique<SceneOptimizer>(g, cls, lr, position_scale);

  std::mt19937_64 order_rng(config.seed);
  std::vector<int> order(views.size());
  std::size_t cursor = order.size();
  const auto t0 = std::chrono::steady_clock::now();

  for (int it = 1; it <= config.iterations; ++it) {
    if (cursor == order.size()) {
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), order_rng);
      cursor = 0;
    }
    const int vi = order[cursor++];
    const TrainView& view = views[vi];

    TrainLogRecord rec;
    rec.iteration = it;
    rec.view = vi;

    const RenderOutput render = render_color(g, view.camera, config.background);
    const PhotometricLoss photo = photometric_loss(render, view.image);
    rec.photometric = photo.value;
    check_finite(photo.value, "photometric", it, vi);
    GaussianGrads grads = render_color_backward(g, view.camera, render, photo.grad);
    ClassifierGrads cls_grads(cls);

    if (use_masks && view.mask && config.lambda_ce > 0.0f) {
      const FeatureRenderOutput feat = render_features(g, view.camera);
      CrossEntropyLoss ce = id_cross_entropy(feat, cls, *view.mask);
      rec.cross_entropy = ce.value;
      check_finite(ce.value, "cross-entropy", it, vi);
      for (float& v : ce.grad_features) v *= config.lambda_ce;
      const GaussianGrads fg = render_features_backward(g, view.camera, feat, ce.grad_features);
      for (std::size_t i = 0; i < grads.id_features.size(); ++i) {
        grads.id_features[i] += fg.id_features[i];
      }
      for (std::size_t i = 0; i < cls_grads.weights.size(); ++i) {
        cls_grads.weights[i] += config.lambda_ce * ce.grad_classifier.weights[i];
      }
      for (std::size_t i = 0; i < cls_grads.bias.size(); ++i) {
        cls_grads.bias[i] += config.lambda_ce * ce.grad_classifier.bias[i];
      }
    }
    if (use_masks && config.lambda_3d > 0.0f && g.size() > static_cast<std::size_t>(config.knn)) {
      const SpatialLoss sp = spatial_consistency_loss(
          g, cls, config.sample_size, config.knn, config.seed * 1000003ull + it);
      rec.spatial = sp.value;
      check_finite(sp.value, "spatial", it, vi);
      for (std::size_t i = 0; i < grads.id_features.size(); ++i) {
        grads.id_features[i] += config.lambda_3d * sp.grad_features[i];
      }
    }
    rec.total = rec.photometric + config.lambda_ce * rec.cross_entropy +
                config.lambda_3d * rec.spatial;
    check_finite(rec.total, "total", it, vi);

    opt->step(g, grads, cls, cls_grads);

    if (config.prune_every > 0 && it % config.prune_every == 0) {
      std::vector<char> keep(g.size());
      std::vector<std::size_t> kept;
      for (std::size_t i = 0; i < g.size(); ++i) {
        keep[i] = g.opacity(i) >= config.prune_opacity;
        if (keep[i]) kept.push_back(i);
      }
      if (kept.size() != g.size() && !kept.empty()) {
        opt->compact(keep);
        g = g.subset(kept);
      }
    }

    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(rec);
    if (hooks.on_log) hooks.on_log(rec);
    if (hooks.on_snapshot && config.snapshot_every > 0 && it % config.snapshot_every == 0) {
      hooks.on_snapshot(it, g, cls);
    }
  }
  result.metadata = {static_cast<std::uint64_t>(config.iterations), config.seed, config.hash()};
  return result;
}

std::vector<TrainView> load_train_views(const SceneData& scene, int* num_classes) {
  FramePixels px = load_frames(scene);
  std::vector<TrainView> views(scene.frames.size());
  for (std::size_t i = 0; i < views.size(); ++i) {
    views[i].camera = scene.frames[i].camera;
    views[i].image = std::move(px.images[i]);
    if (!px.masks.empty()) views[i].mask = std::move(px.masks[i]);
  }
  if (num_classes) *num_classes = px.num_classes;
  return views;
}

TrainResult train(const SceneData& scene, const TrainConfig& config, const TrainHooks& hooks) {
  if (!scene.points) {
    throw DataError(fmt::format("{}: points.ply is required to initialize training",
                                scene.root.string()));
  }
  int classes = 0;
  const auto views = load_train_views(scene, &classes);
  return train(views, classes, initialize_from_points(*scene.points, config.sh_degree, config.seed),
               config, hooks);
}

}  // namespace splat
