// SPDX-License-Identifier: Apache-2.0
#define EIGEN_DONT_PARALLELIZE
#include "splat/styler.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "splat/adam.hpp"
#include "splat/error.hpp"
#include "splat/raster.hpp"
#include "splat/sh.hpp"

namespace splat {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMat>;

// Columns scaled to unit length; zero columns stay zero. Returns the norms.
Eigen::VectorXf normalize_columns(RowMat& m) {
  Eigen::VectorXf norms = m.colwise().norm().transpose();
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    if (norms[j] > 0.0f) m.col(j) /= norms[j];
  }
  return norms;
}

}  // namespace

NnfmResult nnfm_loss(const FeatureStack& render, const FeatureStack& style, bool raw_dot) {
  if (style.maps.empty()) throw InvalidArgument("nnfm_loss: empty style stack");
  if (render.maps.size() != style.maps.size()) {
    throw InvalidArgument("nnfm_loss: render and style stacks have different layers");
  }
  NnfmResult out;
  for (std::size_t l = 0; l < render.maps.size(); ++l) {
    const FeatureMap& fr = render.maps[l];
    const FeatureMap& fs = style.maps[l];
    if (fr.layer != fs.layer || fr.channels != fs.channels) {
      throw InvalidArgument(fmt::format("nnfm_loss: layer mismatch ({} vs {})", fr.layer, fs.layer));
    }
    const Eigen::Index c = fr.channels;
    const Eigen::Index n = static_cast<Eigen::Index>(fr.locations());
    const Eigen::Index m = static_cast<Eigen::Index>(fs.locations());
    if (m == 0) throw InvalidArgument(fmt::format("nnfm_loss: no style features at layer {}", fs.layer));

    RowMat r = ConstRowMap(fr.data.data(), c, n);
    RowMat s = ConstRowMap(fs.data.data(), c, m);
    Eigen::VectorXf rnorm;
    if (!raw_dot) {
      rnorm = normalize_columns(r);
      normalize_columns(s);
    }
    const RowMat sim = r.transpose() * s;  // n x m

    FeatureMap grad{fr.layer, fr.channels, fr.height, fr.width,
                    std::vector<float>(fr.data.size(), 0.0f)};
    double sum = 0.0;
    const float inv = 1.0f / static_cast<float>(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!raw_dot && rnorm[i] == 0.0f) {
        sum += 1.0;
        continue;
      }
      Eigen::Index best = 0;
      const float top = sim.row(i).maxCoeff(&best);
      sum += 1.0 - static_cast<double>(top);
      // d(1 - cos)/dr = -(s_hat - cos * r_hat) / |r|; raw: -s.
      for (Eigen::Index k = 0; k < c; ++k) {
        const float g = raw_dot ? -s(k, best) : -(s(k, best) - top * r(k, i)) / rnorm[i];
        grad.data[k * n + i] = g * inv;
      }
    }
    const double layer_loss = sum / static_cast<double>(n);
    out.per_layer.push_back(layer_loss);
    out.total += layer_loss;
    out.grads.push_back(std::move(grad));
  }
  return out;
}

FeatureStack prepare_style_features(const FeatureExtractor& extractor, const Image& style,
                                    float scale, std::span<const int> layers) {
  if (!(scale > 0.0f && scale <= 1.0f)) {
    throw InvalidArgument(fmt::format("style scale {} outside (0, 1]", scale));
  }
  if (style.width == 0 || style.height == 0) throw InvalidArgument("empty style image");
  const int w = static_cast<int>(std::lround(style.width * static_cast<double>(scale)));
  const int h = static_cast<int>(std::lround(style.height * static_cast<double>(scale)));
  int deepest = 0;
  for (int l : layers) deepest = std::max(deepest, l);
  const int min_size = minimum_image_size(extractor, deepest);
  if (w < min_size || h < min_size) {
    throw InvalidArgument(fmt::format(
        "style image scaled to {}x{} is too small for layer {} (needs {}x{})", w, h, deepest,
        min_size, min_size));
  }
  const Image scaled = (w == style.width && h == style.height) ? style : resize_bilinear(style, w, h);
  return extract(extractor, scaled, layers);
}

std::vector<int> select_views(int num_views, float fraction) {
  if (!(fraction > 0.0f && fraction <= 1.0f)) {
    throw InvalidArgument(fmt::format("view fraction {} outside (0, 1]", fraction));
  }
  if (num_views <= 0) return {};
  const auto count = static_cast<long long>(
      std::ceil(static_cast<double>(fraction) * num_views - 1e-9));
  std::vector<int> out;
  for (long long i = 0; i < count; ++i) out.push_back(static_cast<int>(i * num_views / count));
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void StyleJob::validate() const {
  if (iterations < 1 || iterations > 10000) {
    throw InvalidArgument(fmt::format("style iterations {} outside [1, 10000]", iterations));
  }
  if (!(lr > 0.0f) || !std::isfinite(lr)) throw InvalidArgument("style learning rate must be > 0");
  if (!(style_scale > 0.0f && style_scale <= 1.0f)) {
    throw InvalidArgument(fmt::format("style scale {} outside (0, 1]", style_scale));
  }
  if (!(view_fraction > 0.0f && view_fraction <= 1.0f)) {
    throw InvalidArgument(fmt::format("view fraction {} outside (0, 1]", view_fraction));
  }
  if (layers.empty()) throw InvalidArgument("no style layers");
  if (content_weight < 0.0f) throw InvalidArgument("content weight must be >= 0");
}

namespace {

Image to_image(const RenderOutput& r) {
  Image img;
  img.width = r.width;
  img.height = r.height;
  img.rgb = r.color;
  return img;
}

}  // namespace

double mean_nnfm(const GaussianSet& gaussians, const std::vector<Camera>& cameras,
                 const std::vector<int>& views, const FeatureStack& style,
                 const FeatureExtractor& extractor, std::span<const int> layers,
                 const Vec3& background, bool raw_dot) {
  double sum = 0.0;
  for (int v : views) {
    const Image img = to_image(render_color(gaussians, cameras.at(v), background));
    sum += nnfm_loss(extract(extractor, img, layers), style, raw_dot).total;
  }
  return views.empty() ? 0.0 : sum / static_cast<double>(views.size());
}

StyleResult stylize(const GaussianSet& gaussians, const std::vector<Camera>& cameras,
                    const StyleJob& job, const FeatureExtractor& extractor) {
  job.validate();
  if (job.selection.empty()) throw InvalidArgument("stylize: empty selection");
  for (std::size_t i : job.selection) {
    if (i >= gaussians.size()) {
      throw InvalidArgument(fmt::format("stylize: selected index {} out of range", i));
    }
  }
  if (cameras.empty()) throw InvalidArgument("stylize: no cameras");

  StyleResult result;
  result.gaussians = gaussians;
  GaussianSet& g = result.gaussians;
  result.views = select_views(static_cast<int>(cameras.size()), job.view_fraction);
  const FeatureStack style = prepare_style_features(extractor, job.style, job.style_scale, job.layers);

  std::vector<std::vector<float>> content;
  if (job.content_weight > 0.0f) {
    for (int v : result.views) content.push_back(render_color(gaussians, cameras[v], job.background).color);
  }

  const std::size_t k = static_cast<std::size_t>(g.sh_per_gaussian());
  std::vector<float> params(job.selection.size() * k), grads(params.size());
  for (std::size_t s = 0; s < job.selection.size(); ++s) {
    std::copy_n(&g.sh_coeffs[job.selection[s] * k], k, &params[s * k]);
  }
  // Scene as seen by the loss; only differs from `g` in non-selected SH.
  GaussianSet isolated;
  if (job.isolate_selection) {
    isolated = gaussians;
    std::vector<bool> keep(g.size(), false);
    for (std::size_t i : job.selection) keep[i] = true;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (keep[i]) continue;
      float* c = &isolated.sh_coeffs[i * k];
      std::fill_n(c, k, 0.0f);
      for (int ch = 0; ch < 3; ++ch) c[ch] = rgb_to_sh_dc(job.background[ch]);
    }
  }
  GaussianSet& seen = job.isolate_selection ? isolated : g;

  AdamState adam;
  adam.add_group("sh_coeffs", params.size(), job.lr);

  for (int it = 0; it < job.iterations; ++it) {
    const std::size_t slot = static_cast<std::size_t>(it) % result.views.size();
    const int view = result.views[slot];
    const Camera& cam = cameras[view];
    const RenderOutput render = render_color(seen, cam, job.background);
    ExtractCache cache;
    const FeatureStack feats = extract(extractor, to_image(render), job.layers, &cache);
    const NnfmResult loss = nnfm_loss(feats, style, job.raw_dot);
    std::vector<float> upstream = extract_backward(extractor, cache, loss.grads);

    StyleLogRecord rec{it + 1, view, loss.per_layer, loss.total};
    if (job.content_weight > 0.0f) {
      const auto& target = content[slot];
      const float w = job.content_weight / static_cast<float>(target.size());
      double l1 = 0.0;
      for (std::size_t i = 0; i < target.size(); ++i) {
        const float d = render.color[i] - target[i];
        l1 += std::abs(d);
        upstream[i] += d > 0.0f ? w : (d < 0.0f ? -w : 0.0f);
      }
      rec.total += job.content_weight * l1 / static_cast<double>(target.size());
    }
    if (!std::isfinite(rec.total)) {
      throw DivergenceError(fmt::format("non-finite style loss at iteration {} (view {})", it + 1, view));
    }
    result.log.push_back(rec);

    const GaussianGrads gg = render_color_backward(seen, cam, render, upstream, {.geometry = false});
    for (std::size_t s = 0; s < job.selection.size(); ++s) {
      std::copy_n(&gg.sh_coeffs[job.selection[s] * k], k, &grads[s * k]);
    }
    const ParamGroupRef refs[] = {{params, grads}};
    adam_step(adam, refs);
    for (std::size_t s = 0; s < job.selection.size(); ++s) {
      std::copy_n(&params[s * k], k, &g.sh_coeffs[job.selection[s] * k]);
      if (job.isolate_selection) std::copy_n(&params[s * k], k, &isolated.sh_coeffs[job.selection[s] * k]);
    }
  }
  return result;
}

}  // namespace splat
