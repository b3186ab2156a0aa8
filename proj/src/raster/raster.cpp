// SPDX-License-Identifier: Apache-2.0
#include "splat/raster.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "splat/covariance.hpp"
#include "splat/error.hpp"
#include "splat/sh.hpp"

namespace splat {
namespace {

// Sigma multiple beyond which opacity * exp(-d^2 / 2) < alpha_skip, so the
// square footprint bounds every pixel that can pass the skip test.
float footprint_sigmas(float opacity, float alpha_skip) {
  const float needed = std::sqrt(2.0f * std::log(opacity / alpha_skip)) + 1e-3f;
  return std::max(3.0f, needed);
}

struct Sample {
  float alpha;
  float gauss;
  float dx;
  float dy;
  bool clamped;
};

inline bool sample_splat(const ProjectedGaussian& p, float opacity, float px, float py,
                         const RasterSettings& s, Sample& out) {
  const float dx = px - p.mean2d.x();
  const float dy = py - p.mean2d.y();
  if (std::abs(dx) > p.radius || std::abs(dy) > p.radius) return false;
  const float power =
      -0.5f * (p.conic(0, 0) * dx * dx + p.conic(1, 1) * dy * dy) - p.conic(0, 1) * dx * dy;
  if (power > 0.0f) return false;
  const float g = std::exp(power);
  const float raw = opacity * g;
  out.clamped = raw > s.alpha_max;
  out.alpha = std::min(s.alpha_max, raw);
  out.gauss = g;
  out.dx = dx;
  out.dy = dy;
  return out.alpha >= s.alpha_skip;
}

void check_camera(const Camera& camera) { camera.validate(1e-3f); }

RasterState build_state(const GaussianSet& gaussians, const Camera& camera,
                        const RasterSettings& settings) {
  RasterState st;
  st.settings = settings;
  st.visible = sort_and_cull(gaussians, camera, settings);
  st.tile_w = settings.tile_size > 0 ? settings.tile_size : camera.width;
  st.tile_h = settings.tile_size > 0 ? settings.tile_size : camera.height;
  st.tiles_x = (camera.width + st.tile_w - 1) / st.tile_w;
  st.tiles_y = (camera.height + st.tile_h - 1) / st.tile_h;
  st.tile_lists.assign(static_cast<std::size_t>(st.tiles_x) * st.tiles_y, {});

  for (std::size_t v = 0; v < st.visible.size(); ++v) {
    const ProjectedGaussian& p = st.visible.projected[v];
    const int x0 = std::max(0, static_cast<int>(std::ceil(p.mean2d.x() - p.radius)));
    const int x1 = std::min(camera.width - 1, static_cast<int>(std::floor(p.mean2d.x() + p.radius)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(p.mean2d.y() - p.radius)));
    const int y1 =
        std::min(camera.height - 1, static_cast<int>(std::floor(p.mean2d.y() + p.radius)));
    if (x0 > x1 || y0 > y1) continue;
    for (int ty = y0 / st.tile_h; ty <= y1 / st.tile_h; ++ty) {
      for (int tx = x0 / st.tile_w; tx <= x1 / st.tile_w; ++tx) {
        st.tile_lists[static_cast<std::size_t>(ty) * st.tiles_x + tx].push_back(
            static_cast<std::uint32_t>(v));
      }
    }
  }
  st.last_contributor.assign(static_cast<std::size_t>(camera.width) * camera.height, 0);
  return st;
}

struct ForwardTally {
  std::uint64_t accepted = 0;
  std::uint64_t clamped = 0;
};

// Front-to-back compositing of `channels` values per visible Gaussian.
ForwardTally composite_forward(RasterState& st, const Camera& camera,
                               std::span<const float> values, int channels,
                               std::span<const float> background, std::span<float> image,
                               std::span<float> transmittance,
                               std::vector<std::uint32_t>* contributor_count) {
  const int width = camera.width;
  const int height = camera.height;
  const int num_tiles = st.tiles_x * st.tiles_y;
  std::vector<ForwardTally> tallies(num_tiles);
  const RasterSettings& s = st.settings;

#pragma omp parallel for schedule(dynamic, 1)
  for (int tile = 0; tile < num_tiles; ++tile) {
    const int tx = tile % st.tiles_x;
    const int ty = tile / st.tiles_x;
    const auto& list = st.tile_lists[tile];
    ForwardTally tally;
    std::vector<float> acc(channels);
    for (int py = ty * st.tile_h; py < std::min(height, (ty + 1) * st.tile_h); ++py) {
      for (int px = tx * st.tile_w; px < std::min(width, (tx + 1) * st.tile_w); ++px) {
        const std::size_t pixel = static_cast<std::size_t>(py) * width + px;
        std::fill(acc.begin(), acc.end(), 0.0f);
        float t = 1.0f;
        std::uint32_t last = 0;
        std::uint32_t count = 0;
        for (std::uint32_t pos = 0; pos < list.size(); ++pos) {
          const std::uint32_t v = list[pos];
          Sample smp;
          if (!sample_splat(st.visible.projected[v], st.visible.opacities[v],
                            static_cast<float>(px), static_cast<float>(py), s, smp)) {
            continue;
          }
          const float next_t = t * (1.0f - smp.alpha);
          if (next_t < s.transmittance_stop) break;
          const float w = smp.alpha * t;
          const float* val = &values[static_cast<std::size_t>(v) * channels];
          for (int c = 0; c < channels; ++c) acc[c] += val[c] * w;
          t = next_t;
          last = pos + 1;
          ++count;
          ++tally.accepted;
          if (smp.clamped) ++tally.clamped;
        }
        float* out = &image[pixel * channels];
        for (int c = 0; c < channels; ++c) out[c] = acc[c] + t * background[c];
        transmittance[pixel] = t;
        st.last_contributor[pixel] = last;
        if (contributor_count) (*contributor_count)[pixel] = count;
      }
    }
    tallies[tile] = tally;
  }

  ForwardTally total;
  for (const auto& t : tallies) {
    total.accepted += t.accepted;
    total.clamped += t.clamped;
  }
  return total;
}

// Gradients with respect to per-visible quantities.
struct SplatGrads {
  std::vector<float> values;   // visible x channels
  std::vector<float> mean2d;   // visible x 2
  std::vector<float> conic;    // visible x 3 (a, b, c)
  std::vector<float> opacity;  // visible, w.r.t. sigmoid(logit)
};

SplatGrads composite_backward(const RasterState& st, const Camera& camera,
                              std::span<const float> values, int channels,
                              std::span<const float> background,
                              std::span<const float> transmittance,
                              std::span<const float> upstream, bool geometry) {
  const int width = camera.width;
  const int height = camera.height;
  const int num_tiles = st.tiles_x * st.tiles_y;
  const RasterSettings& s = st.settings;
  const int stride = channels + 6;

  // Tile-local accumulators, reduced in tile order for determinism.
  std::vector<std::vector<float>> local(num_tiles);

#pragma omp parallel for schedule(dynamic, 1)
  for (int tile = 0; tile < num_tiles; ++tile) {
    const int tx = tile % st.tiles_x;
    const int ty = tile / st.tiles_x;
    const auto& list = st.tile_lists[tile];
    std::vector<float>& acc = local[tile];
    acc.assign(list.size() * stride, 0.0f);
    std::vector<float> rest(channels);
    for (int py = ty * st.tile_h; py < std::min(height, (ty + 1) * st.tile_h); ++py) {
      for (int px = tx * st.tile_w; px < std::min(width, (tx + 1) * st.tile_w); ++px) {
        const std::size_t pixel = static_cast<std::size_t>(py) * width + px;
        const float* up = &upstream[pixel * channels];
        std::copy(background.begin(), background.end(), rest.begin());
        float t = transmittance[pixel];
        for (std::uint32_t pos = st.last_contributor[pixel]; pos-- > 0;) {
          const std::uint32_t v = list[pos];
          const ProjectedGaussian& p = st.visible.projected[v];
          const float opacity = st.visible.opacities[v];
          Sample smp;
          if (!sample_splat(p, opacity, static_cast<float>(px), static_cast<float>(py), s, smp)) {
            continue;
          }
          t /= (1.0f - smp.alpha);
          const float w = smp.alpha * t;
          const float* val = &values[static_cast<std::size_t>(v) * channels];
          float* g = &acc[static_cast<std::size_t>(pos) * stride];
          float d_alpha = 0.0f;
          for (int c = 0; c < channels; ++c) {
            g[c] += w * up[c];
            d_alpha += (val[c] - rest[c]) * up[c];
            rest[c] = smp.alpha * val[c] + (1.0f - smp.alpha) * rest[c];
          }
          if (!geometry || smp.clamped) continue;
          d_alpha *= t;
          const float d_power = d_alpha * opacity * smp.gauss;
          const float a = p.conic(0, 0), b = p.conic(0, 1), cc = p.conic(1, 1);
          g[channels + 0] += d_power * (a * smp.dx + b * smp.dy);
          g[channels + 1] += d_power * (b * smp.dx + cc * smp.dy);
          g[channels + 2] += d_power * (-0.5f * smp.dx * smp.dx);
          g[channels + 3] += d_power * (-smp.dx * smp.dy);
          g[channels + 4] += d_power * (-0.5f * smp.dy * smp.dy);
          g[channels + 5] += d_alpha * smp.gauss;
        }
      }
    }
  }

  const std::size_t n = st.visible.size();
  SplatGrads out;
  out.values.assign(n * channels, 0.0f);
  out.mean2d.assign(n * 2, 0.0f);
  out.conic.assign(n * 3, 0.0f);
  out.opacity.assign(n, 0.0f);
  for (int tile = 0; tile < num_tiles; ++tile) {
    const auto& list = st.tile_lists[tile];
    const std::vector<float>& acc = local[tile];
    for (std::size_t pos = 0; pos < list.size(); ++pos) {
      const std::uint32_t v = list[pos];
      const float* g = &acc[pos * stride];
      for (int c = 0; c < channels; ++c) out.values[v * channels + c] += g[c];
      out.mean2d[2 * v] += g[channels];
      out.mean2d[2 * v + 1] += g[channels + 1];
      for (int k = 0; k < 3; ++k) out.conic[3 * v + k] += g[channels + 2 + k];
      out.opacity[v] += g[channels + 5];
    }
  }
  return out;
}

// Chains screen-space gradients through projection and covariance.
void geometry_backward(const GaussianSet& gaussians, const Camera& camera, const RasterState& st,
                       const SplatGrads& sg, GaussianGrads& grads) {
  const std::size_t n = st.visible.size();
#pragma omp parallel for schedule(static)
  for (std::size_t v = 0; v < n; ++v) {
    const std::size_t i = st.visible.indices[v];
    const ProjectedGaussian& p = st.visible.projected[v];
    const Quat q = gaussians.rotation(i);
    const Vec3 ls = gaussians.log_scale(i);
    const Mat3 cov3d = build_covariance(q, ls);

    Mat2 grad_conic;
    grad_conic << sg.conic[3 * v], 0.5f * sg.conic[3 * v + 1], 0.5f * sg.conic[3 * v + 1],
        sg.conic[3 * v + 2];
    const Mat2 grad_cov2d = -p.conic * grad_conic * p.conic;
    const Vec2 grad_mean{sg.mean2d[2 * v], sg.mean2d[2 * v + 1]};
    const ProjectionGrad pg =
        project_gaussian_backward(gaussians.position(i), cov3d, camera, grad_mean, grad_cov2d);
    const CovarianceGrad cg = build_covariance_backward(pg.covariance, q, ls);

    for (int k = 0; k < 3; ++k) {
      grads.positions[3 * i + k] += pg.position[k];
      grads.log_scales[3 * i + k] += cg.log_scale[k];
    }
    for (int k = 0; k < 4; ++k) grads.rotations[4 * i + k] += cg.rotation[k];
    const float op = st.visible.opacities[v];
    grads.opacity_logits[i] += sg.opacity[v] * op * (1.0f - op);
  }
}

Vec3 view_direction(const Vec3& position, const Vec3& eye, float* length = nullptr) {
  const Vec3 d = position - eye;
  const float len = d.norm();
  if (length) *length = len;
  return len > 0.0f ? Vec3(d / len) : Vec3(0.0f, 0.0f, 1.0f);
}

void check_upstream(std::span<const float> upstream, const Camera& camera, int channels) {
  const std::size_t expected = static_cast<std::size_t>(camera.width) * camera.height * channels;
  if (upstream.size() != expected) {
    throw InvalidArgument(
        fmt::format("upstream gradient has {} values, expected {}", upstream.size(), expected));
  }
}

}  // namespace

GaussianGrads::GaussianGrads(const GaussianSet& like)
    : positions(like.positions.size(), 0.0f),
      rotations(like.rotations.size(), 0.0f),
      log_scales(like.log_scales.size(), 0.0f),
      opacity_logits(like.opacity_logits.size(), 0.0f),
      sh_coeffs(like.sh_coeffs.size(), 0.0f),
      id_features(like.id_features.size(), 0.0f) {}

VisibleSet sort_and_cull(const GaussianSet& gaussians, const Camera& camera,
                         const RasterSettings& settings) {
  gaussians.validate();
  std::vector<std::size_t> candidates;
  std::vector<ProjectedGaussian> projected(gaussians.size());
  std::vector<float> opacities(gaussians.size());
  VisibleSet out;
  for (std::size_t i = 0; i < gaussians.size(); ++i) {
    const float op = gaussians.opacity(i);
    if (!(op >= settings.alpha_skip)) continue;  // can never pass the skip test
    const Mat3 cov = build_covariance(gaussians.rotation(i), gaussians.log_scale(i));
    ProjectionStatus status;
    auto p = project_gaussian(gaussians.position(i), cov, camera, settings.near_plane,
                              footprint_sigmas(op, settings.alpha_skip), &status);
    if (status == ProjectionStatus::kDegenerate) ++out.degenerate;
    if (!p) continue;
    projected[i] = *p;
    opacities[i] = op;
    candidates.push_back(i);
  }
  std::stable_sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
    return projected[a].depth < projected[b].depth;
  });
  out.indices = candidates;
  out.projected.reserve(candidates.size());
  out.opacities.reserve(candidates.size());
  for (std::size_t i : candidates) {
    out.projected.push_back(projected[i]);
    out.opacities.push_back(opacities[i]);
  }
  return out;
}

RenderOutput render_color(const GaussianSet& gaussians, const Camera& camera,
                          const Vec3& background, const RasterSettings& settings) {
  check_camera(camera);
  RenderOutput out;
  out.width = camera.width;
  out.height = camera.height;
  out.background = background;
  out.state = build_state(gaussians, camera, settings);
  const VisibleSet& vis = out.state.visible;
  out.sorted_order = vis.indices;

  const Vec3 eye = camera.center();
  out.splat_colors.resize(vis.size() * 3);
  for (std::size_t v = 0; v < vis.size(); ++v) {
    const std::size_t i = vis.indices[v];
    const Vec3 rgb =
        eval_sh(gaussians.sh(i), view_direction(gaussians.position(i), eye), gaussians.sh_degree);
    for (int c = 0; c < 3; ++c) out.splat_colors[3 * v + c] = rgb[c];
  }

  const std::size_t pixels = static_cast<std::size_t>(camera.width) * camera.height;
  out.color.assign(pixels * 3, 0.0f);
  out.final_transmittance.assign(pixels, 1.0f);
  out.per_pixel_contributor_count.assign(pixels, 0);
  const std::array<float, 3> bg{background.x(), background.y(), background.z()};
  const ForwardTally tally =
      composite_forward(out.state, camera, out.splat_colors, 3, bg, out.color,
                        out.final_transmittance, &out.per_pixel_contributor_count);
  out.accepted_splats = tally.accepted;
  out.clamped_splats = tally.clamped;
  return out;
}

GaussianGrads render_color_backward(const GaussianSet& gaussians, const Camera& camera,
                                    const RenderOutput& forward, std::span<const float> upstream,
                                    const BackwardOptions& options) {
  check_upstream(upstream, camera, 3);
  const RasterState& st = forward.state;
  const std::array<float, 3> bg{forward.background.x(), forward.background.y(),
                                forward.background.z()};
  const SplatGrads sg = composite_backward(st, camera, forward.splat_colors, 3, bg,
                                           forward.final_transmittance, upstream,
                                           options.geometry);
  GaussianGrads grads(gaussians);
  const Vec3 eye = camera.center();
  const int k = gaussians.sh_per_gaussian();
  std::vector<float> sh_grad(k);
  for (std::size_t v = 0; v < st.visible.size(); ++v) {
    const std::size_t i = st.visible.indices[v];
    const Vec3 up{sg.values[3 * v], sg.values[3 * v + 1], sg.values[3 * v + 2]};
    float len = 0.0f;
    const Vec3 dir = view_direction(gaussians.position(i), eye, &len);
    const Vec3 grad_dir = eval_sh_backward(gaussians.sh(i), dir, gaussians.sh_degree, up, sh_grad);
    std::copy(sh_grad.begin(), sh_grad.end(), grads.sh_coeffs.begin() + i * k);
    if (options.geometry && len > 0.0f) {
      const Vec3 grad_pos = (grad_dir - dir * dir.dot(grad_dir)) / len;
      for (int c = 0; c < 3; ++c) grads.positions[3 * i + c] += grad_pos[c];
    }
  }
  if (options.geometry) geometry_backward(gaussians, camera, st, sg, grads);
  return grads;
}

FeatureRenderOutput render_features(const GaussianSet& gaussians, const Camera& camera,
                                    const RasterSettings& settings) {
  check_camera(camera);
  FeatureRenderOutput out;
  out.width = camera.width;
  out.height = camera.height;
  out.state = build_state(gaussians, camera, settings);
  const VisibleSet& vis = out.state.visible;
  std::vector<float> values(vis.size() * kIdFeatureDim);
  for (std::size_t v = 0; v < vis.size(); ++v) {
    const auto f = gaussians.id_feature(vis.indices[v]);
    std::copy(f.begin(), f.end(), values.begin() + v * kIdFeatureDim);
  }
  const std::size_t pixels = static_cast<std::size_t>(camera.width) * camera.height;
  out.features.assign(pixels * kIdFeatureDim, 0.0f);
  out.final_transmittance.assign(pixels, 1.0f);
  out.per_pixel_contributor_count.assign(pixels, 0);
  const std::array<float, kIdFeatureDim> bg{};
  const ForwardTally tally =
      composite_forward(out.state, camera, values, kIdFeatureDim, bg, out.features,
                        out.final_transmittance, &out.per_pixel_contributor_count);
  out.accepted_splats = tally.accepted;
  out.clamped_splats = tally.clamped;
  return out;
}

GaussianGrads render_features_backward(const GaussianSet& gaussians, const Camera& camera,
                                       const FeatureRenderOutput& forward,
                                       std::span<const float> upstream,
                                       const BackwardOptions& options) {
  check_upstream(upstream, camera, kIdFeatureDim);
  const RasterState& st = forward.state;
  std::vector<float> values(st.visible.size() * kIdFeatureDim);
  for (std::size_t v = 0; v < st.visible.size(); ++v) {
    const auto f = gaussians.id_feature(st.visible.indices[v]);
    std::copy(f.begin(), f.end(), values.begin() + v * kIdFeatureDim);
  }
  const std::array<float, kIdFeatureDim> bg{};
  const SplatGrads sg = composite_backward(st, camera, values, kIdFeatureDim, bg,
                                           forward.final_transmittance, upstream,
                                           options.geometry);
  GaussianGrads grads(gaussians);
  for (std::size_t v = 0; v < st.visible.size(); ++v) {
    const std::size_t i = st.visible.indices[v];
    std::copy_n(&sg.values[v * kIdFeatureDim], kIdFeatureDim,
                grads.id_features.begin() + i * kIdFeatureDim);
  }
  if (options.geometry) geometry_backward(gaussians, camera, st, sg, grads);
  return grads;
}

std::vector<std::uint16_t> render_id_map(const GaussianSet& gaussians, const Camera& camera,
                                         const Classifier& classifier,
                                         const RasterSettings& settings) {
  classifier.validate();
  const FeatureRenderOutput fr = render_features(gaussians, camera, settings);
  const std::size_t pixels = static_cast<std::size_t>(camera.width) * camera.height;
  std::vector<std::uint16_t> ids(pixels, kBackgroundId);
  for (std::size_t p = 0; p < pixels; ++p) {
    if (fr.final_transmittance[p] > 0.5f) continue;
    ids[p] = static_cast<std::uint16_t>(classifier.argmax(
        std::span<const float>(&fr.features[p * kIdFeatureDim], kIdFeatureDim)));
  }
  return ids;
}

void render_channels(const GaussianSet& gaussians, const Camera& camera,
                     std::span<const float> values, int channels,
                     std::span<const float> background, std::span<float> image,
                     std::span<float> transmittance, const RasterSettings& settings) {
  check_camera(camera);
  const std::size_t pixels = static_cast<std::size_t>(camera.width) * camera.height;
  if (channels < 1 || values.size() != gaussians.size() * channels ||
      background.size() != static_cast<std::size_t>(channels) ||
      image.size() != pixels * channels || transmittance.size() != pixels) {
    throw InvalidArgument("render_channels buffer sizes do not match the scene and camera");
  }
  RasterState st = build_state(gaussians, camera, settings);
  std::vector<float> per_visible(st.visible.size() * channels);
  for (std::size_t v = 0; v < st.visible.size(); ++v) {
    std::copy_n(&values[st.visible.indices[v] * channels], channels, &per_visible[v * channels]);
  }
  composite_forward(st, camera, per_visible, channels, background, image, transmittance, nullptr);
}

}  // namespace splat
