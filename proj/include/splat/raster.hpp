// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "splat/camera.hpp"
#include "splat/classifier.hpp"
#include "splat/gaussians.hpp"
#include "splat/projection.hpp"

namespace splat {

inline constexpr float kAlphaMax = 0.99f;
inline constexpr float kAlphaSkip = 1.0f / 255.0f;
inline constexpr float kTransmittanceStop = 1e-4f;
inline constexpr int kTileSize = 16;
inline constexpr std::uint16_t kBackgroundId = 0;

struct RasterSettings {
  float near_plane = kDefaultNearPlane;
  float alpha_max = kAlphaMax;
  float alpha_skip = kAlphaSkip;
  float transmittance_stop = kTransmittanceStop;
  /// Tile edge in pixels; 0 renders the whole image as one tile.
  int tile_size = kTileSize;
};

/// Non-culled Gaussians in front-to-back order.
struct VisibleSet {
  std::vector<std::size_t> indices;           // into the GaussianSet, ascending depth
  std::vector<ProjectedGaussian> projected;   // parallel to indices
  std::vector<float> opacities;               // sigmoid(logit), parallel to indices
  std::size_t degenerate = 0;                 // skipped for a singular screen covariance

  std::size_t size() const { return indices.size(); }
};

/// Projects every Gaussian, drops culled ones and stably sorts the rest by
/// camera-space depth (ties keep the original index order).
VisibleSet sort_and_cull(const GaussianSet& gaussians, const Camera& camera,
                         const RasterSettings& settings = {});

/// Per-frame state the backward pass replays.
struct RasterState {
  RasterSettings settings;
  VisibleSet visible;
  int tiles_x = 0;
  int tiles_y = 0;
  int tile_w = 0;
  int tile_h = 0;
  /// Per tile, positions into `visible` overlapping it, front to back.
  std::vector<std::vector<std::uint32_t>> tile_lists;
  /// Per pixel, one past the last tile-list position that was blended.
  std::vector<std::uint32_t> last_contributor;
};

struct RenderOutput {
  int width = 0;
  int height = 0;
  std::vector<float> color;                               // H x W x 3
  std::vector<float> final_transmittance;                 // H x W
  std::vector<std::uint32_t> per_pixel_contributor_count; // H x W
  std::vector<std::size_t> sorted_order;
  Vec3 background = Vec3::Zero();
  /// Per visible Gaussian color evaluated for this camera.
  std::vector<float> splat_colors;
  /// Total accepted (pixel, Gaussian) pairs and how many hit alpha_max.
  std::uint64_t accepted_splats = 0;
  std::uint64_t clamped_splats = 0;
  RasterState state;
};

struct FeatureRenderOutput {
  int width = 0;
  int height = 0;
  std::vector<float> features;             // H x W x 16
  std::vector<float> final_transmittance;  // H x W
  std::vector<std::uint32_t> per_pixel_contributor_count; // H x W
  std::uint64_t accepted_splats = 0;
  std::uint64_t clamped_splats = 0;
  RasterState state;
};

/// Gradients shaped like the GaussianSet arrays.
struct GaussianGrads {
  std::vector<float> positions;
  std::vector<float> rotations;
  std::vector<float> log_scales;
  std::vector<float> opacity_logits;
  std::vector<float> sh_coeffs;
  std::vector<float> id_features;

  explicit GaussianGrads(const GaussianSet& like);
  GaussianGrads() = default;
};

struct BackwardOptions {
  /// Propagate into positions, rotations, scales and opacities.
  bool geometry = true;
};

RenderOutput render_color(const GaussianSet& gaussians, const Camera& camera,
                          const Vec3& background, const RasterSettings& settings = {});

/// Gradient of <upstream, color> where upstream is H x W x 3.
GaussianGrads render_color_backward(const GaussianSet& gaussians, const Camera& camera,
                                    const RenderOutput& forward, std::span<const float> upstream,
                                    const BackwardOptions& options = {});

/// Composites the 16-d identity features with a zero background.
FeatureRenderOutput render_features(const GaussianSet& gaussians, const Camera& camera,
                                    const RasterSettings& settings = {});

/// Gradient of <upstream, features> where upstream is H x W x 16. Geometry
/// gradients are only produced when `options.geometry` is set.
GaussianGrads render_features_backward(const GaussianSet& gaussians, const Camera& camera,
                                       const FeatureRenderOutput& forward,
                                       std::span<const float> upstream,
                                       const BackwardOptions& options = {.geometry = false});

/// Per-pixel classifier argmax of the rendered features; pixels whose final
/// transmittance exceeds 0.5 are background.
std::vector<std::uint16_t> render_id_map(const GaussianSet& gaussians, const Camera& camera,
                                         const Classifier& classifier,
                                         const RasterSettings& settings = {});

/// Generic compositing of `channels` values per Gaussian (N x channels,
/// indexed by Gaussian, not by visible position) over a constant background.
/// Writes H x W x channels into `image` and H x W into `transmittance`.
void render_channels(const GaussianSet& gaussians, const Camera& camera,
                     std::span<const float> values, int channels,
                     std::span<const float> background, std::span<float> image,
                     std::span<float> transmittance, const RasterSettings& settings = {});

}  // namespace splat
