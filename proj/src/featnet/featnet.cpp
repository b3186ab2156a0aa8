// SPDX-License-Identifier: Apache-2.0
#define EIGEN_DONT_PARALLELIZE
#include "splat/featnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "splat/error.hpp"

namespace splat {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMat>;
using RowMap = Eigen::Map<RowMat>;

constexpr char kMagic[4] = {'F', 'N', 'E', 'T'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

std::vector<int> vgg16_plan() {
  return {64, 64, kPool, 128, 128, kPool, 256, 256, 256, kPool,
          512, 512, 512, kPool, 512, 512, 512, kPool};
}

FeatureExtractor::FeatureExtractor(std::vector<int> plan, std::vector<ConvWeights> convs)
    : plan_(std::move(plan)), convs_(std::move(convs)) {
  int in = 3;
  std::size_t conv = 0;
  for (const int entry : plan_) {
    if (entry < 0) throw InvalidArgument("negative channel count in plan");
    if (entry == kPool) {
      layers_.push_back({LayerKind::kMaxPool, -1, in, in});
      continue;
    }
    if (conv == convs_.size()) break;
    const ConvWeights& w = convs_[conv];
    const int flat = static_cast<int>(layers_.size());
    if (w.out_channels != entry || w.in_channels != in) {
      throw DataError(fmt::format("layer {}: conv declared {}x{}x3x3, plan expects {}x{}x3x3",
                                  flat, w.out_channels, w.in_channels, entry, in));
    }
    if (w.weights.size() != static_cast<std::size_t>(entry) * in * 9 ||
        w.bias.size() != static_cast<std::size_t>(entry)) {
      throw DataError(fmt::format("layer {}: weight payload does not match {}x{}x3x3", flat,
                                  entry, in));
    }
    layers_.push_back({LayerKind::kConv, static_cast<int>(conv), in, entry});
    layers_.push_back({LayerKind::kRelu, -1, entry, entry});
    in = entry;
    ++conv;
  }
  if (conv != convs_.size()) {
    throw DataError(fmt::format("{} convs supplied but the plan has only {}", convs_.size(), conv));
  }
}

FeatureExtractor FeatureExtractor::random(std::uint64_t seed, std::vector<int> plan) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  std::vector<ConvWeights> convs;
  int in = 3;
  for (int entry : plan) {
    if (entry == kPool) continue;
    const int fan_in = in * 9;
    Eigen::MatrixXf a(std::max(entry, fan_in), std::min(entry, fan_in));
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = normal(rng);
    const Eigen::MatrixXf q =
        Eigen::HouseholderQR<Eigen::MatrixXf>(a).householderQ() *
        Eigen::MatrixXf::Identity(a.rows(), a.cols());
    // q has orthonormal columns; orient it as out x fan_in.
    RowMat w = entry >= fan_in ? RowMat(q) : RowMat(q.transpose());
    // Unit-norm rows on average, times the relu gain.
    const float rms = std::sqrt(w.squaredNorm() / static_cast<float>(entry));
    w *= std::sqrt(2.0f) / rms;
    ConvWeights cw;
    cw.out_channels = entry;
    cw.in_channels = in;
    cw.weights.assign(w.data(), w.data() + w.size());
    cw.bias.assign(entry, 0.0f);
    convs.push_back(std::move(cw));
    in = entry;
  }
  return FeatureExtractor(std::move(plan), std::move(convs));
}

FeatureExtractor FeatureExtractor::load(const std::filesystem::path& path, std::vector<int> plan) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("{}: cannot open weight file", path.string()));
  auto read_u32 = [&](const char* what) {
    std::uint32_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), 4)) {
      throw DataError(fmt::format("{}: truncated weight file reading {}", path.string(), what));
    }
    return v;
  };
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw DataError(fmt::format("{}: not a weight file (bad magic; expected 'FNET' version {})",
                                path.string(), kVersion));
  }
  const std::uint32_t version = read_u32("version");
  if (version != kVersion) {
    throw DataError(fmt::format("{}: unsupported weight file version {} (expected {})",
                                path.string(), version, kVersion));
  }
  const std::uint32_t count = read_u32("conv count");
  std::vector<int> conv_channels;
  for (int e : plan)
    if (e != kPool) conv_channels.push_back(e);
  if (count == 0 || count > conv_channels.size()) {
    throw DataError(fmt::format("{}: {} conv layers, plan allows 1..{}", path.string(), count,
                                conv_channels.size()));
  }
  // Flat layer index of each conv for error messages.
  std::vector<int> flat;
  int idx = 0;
  for (int e : plan) {
    if (e == kPool) {
      ++idx;
    } else {
      flat.push_back(idx);
      idx += 2;
    }
  }
  std::vector<ConvWeights> convs;
  int expect_in = 3;
  for (std::uint32_t c = 0; c < count; ++c) {
    ConvWeights w;
    const std::uint32_t out = read_u32("shape");
    const std::uint32_t inch = read_u32("shape");
    const std::uint32_t kh = read_u32("shape");
    const std::uint32_t kw = read_u32("shape");
    if (out != static_cast<std::uint32_t>(conv_channels[c]) ||
        inch != static_cast<std::uint32_t>(expect_in) || kh != 3 || kw != 3) {
      throw DataError(fmt::format("{}: shape error at layer {}: {}x{}x{}x{}, expected {}x{}x3x3",
                                  path.string(), flat[c], out, inch, kh, kw, conv_channels[c],
                                  expect_in));
    }
    w.out_channels = static_cast<int>(out);
    w.in_channels = static_cast<int>(inch);
    w.weights.resize(static_cast<std::size_t>(out) * inch * 9);
    w.bias.resize(out);
    if (!in.read(reinterpret_cast<char*>(w.weights.data()), w.weights.size() * 4) ||
        !in.read(reinterpret_cast<char*>(w.bias.data()), w.bias.size() * 4)) {
      throw DataError(fmt::format("{}: truncated payload at layer {}", path.string(), flat[c]));
    }
    convs.push_back(std::move(w));
    expect_in = static_cast<int>(out);
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw DataError(fmt::format("{}: trailing bytes after layer {}", path.string(),
                                flat[count - 1]));
  }
  return FeatureExtractor(std::move(plan), std::move(convs));
}

void FeatureExtractor::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(fmt::format("{}: cannot write weight file", path.string()));
  auto put = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  out.write(kMagic, 4);
  put(kVersion);
  put(static_cast<std::uint32_t>(convs_.size()));
  for (const auto& c : convs_) {
    put(c.out_channels);
    put(c.in_channels);
    put(3);
    put(3);
    out.write(reinterpret_cast<const char*>(c.weights.data()), c.weights.size() * 4);
    out.write(reinterpret_cast<const char*>(c.bias.data()), c.bias.size() * 4);
  }
}

int FeatureExtractor::channels(int layer) const { return layers_.at(layer).out_channels; }

int FeatureExtractor::pools_through(int layer) const {
  int n = 0;
  for (int i = 0; i <= layer && i < num_layers(); ++i) n += layers_[i].kind == LayerKind::kMaxPool;
  return n;
}

const FeatureMap& FeatureStack::at_layer(int layer) const {
  for (const auto& m : maps)
    if (m.layer == layer) return m;
  throw InvalidArgument(fmt::format("feature stack has no layer {}", layer));
}

int minimum_image_size(const FeatureExtractor& extractor, int layer) {
  return 1 << extractor.pools_through(layer);
}

int receptive_field_size(const FeatureExtractor& extractor, int layer) {
  if (layer < 0 || layer >= extractor.num_layers()) {
    throw InvalidArgument(fmt::format("layer {} outside 0..{}", layer, extractor.num_layers() - 1));
  }
  int r = 1, jump = 1;
  for (int i = 0; i <= layer; ++i) {
    switch (extractor.layers()[i].kind) {
      case LayerKind::kConv: r += 2 * jump; break;
      case LayerKind::kMaxPool: r += jump; jump *= 2; break;
      case LayerKind::kRelu: break;
    }
  }
  return r;
}

namespace {

// Rows (c, ky, kx), columns are output pixels; zero padding of 1.
void im2col(const float* in, int c, int h, int w, RowMat& col) {
  col.resize(static_cast<Eigen::Index>(c) * 9, static_cast<Eigen::Index>(h) * w);
  for (int ch = 0; ch < c; ++ch) {
    const float* src = in + static_cast<std::size_t>(ch) * h * w;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        float* dst = col.row(ch * 9 + ky * 3 + kx).data();
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - 1;
          float* row = dst + static_cast<std::size_t>(y) * w;
          if (sy < 0 || sy >= h) {
            std::fill(row, row + w, 0.0f);
            continue;
          }
          const float* s = src + static_cast<std::size_t>(sy) * w;
          for (int x = 0; x < w; ++x) {
            const int sx = x + kx - 1;
            row[x] = (sx < 0 || sx >= w) ? 0.0f : s[sx];
          }
        }
      }
    }
  }
}

void col2im(const RowMat& col, int c, int h, int w, float* out) {
  std::fill(out, out + static_cast<std::size_t>(c) * h * w, 0.0f);
  for (int ch = 0; ch < c; ++ch) {
    float* dst = out + static_cast<std::size_t>(ch) * h * w;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const float* src = col.row(ch * 9 + ky * 3 + kx).data();
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          const float* row = src + static_cast<std::size_t>(y) * w;
          float* d = dst + static_cast<std::size_t>(sy) * w;
          for (int x = 0; x < w; ++x) {
            const int sx = x + kx - 1;
            if (sx >= 0 && sx < w) d[sx] += row[x];
          }
        }
      }
    }
  }
}

std::vector<float> conv_forward(const ConvWeights& cw, const std::vector<float>& in, int h,
                                int w) {
  RowMat col;
  im2col(in.data(), cw.in_channels, h, w, col);
  std::vector<float> out(static_cast<std::size_t>(cw.out_channels) * h * w);
  RowMap o(out.data(), cw.out_channels, static_cast<Eigen::Index>(h) * w);
  const ConstRowMap wm(cw.weights.data(), cw.out_channels, cw.in_channels * 9);
  o.noalias() = wm * col;
  for (int c = 0; c < cw.out_channels; ++c) o.row(c).array() += cw.bias[c];
  return out;
}

std::vector<float> conv_backward(const ConvWeights& cw, const std::vector<float>& grad_out, int h,
                                 int w) {
  const ConstRowMap g(grad_out.data(), cw.out_channels, static_cast<Eigen::Index>(h) * w);
  const ConstRowMap wm(cw.weights.data(), cw.out_channels, cw.in_channels * 9);
  RowMat col = wm.transpose() * g;
  std::vector<float> out(static_cast<std::size_t>(cw.in_channels) * h * w);
  col2im(col, cw.in_channels, h, w, out.data());
  return out;
}

std::vector<float> pool_forward(const std::vector<float>& in, int c, int h, int w,
                                std::vector<std::uint32_t>* argmax) {
  const int oh = h / 2, ow = w / 2;
  std::vector<float> out(static_cast<std::size_t>(c) * oh * ow);
  if (argmax) argmax->resize(out.size());
  for (int ch = 0; ch < c; ++ch) {
    const float* src = &in[static_cast<std::size_t>(ch) * h * w];
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        std::uint32_t best = static_cast<std::uint32_t>((2 * y) * w + 2 * x);
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const std::uint32_t k = static_cast<std::uint32_t>((2 * y + dy) * w + 2 * x + dx);
            if (src[k] > src[best]) best = k;
          }
        const std::size_t o = (static_cast<std::size_t>(ch) * oh + y) * ow + x;
        out[o] = src[best];
        if (argmax) (*argmax)[o] = best;
      }
    }
  }
  return out;
}

int deepest(std::span<const int> layers) {
  int d = -1;
  for (int l : layers) d = std::max(d, l);
  return d;
}

}  // namespace

FeatureStack extract(const FeatureExtractor& extractor, const Image& image,
                     std::span<const int> layers, ExtractCache* cache) {
  if (layers.empty()) throw InvalidArgument("no extraction layers requested");
  for (int l : layers) {
    if (l < 0 || l >= extractor.num_layers()) {
      throw InvalidArgument(fmt::format("extraction layer {} outside 0..{}", l,
                                        extractor.num_layers() - 1));
    }
  }
  const int last = deepest(layers);
  const int min_size = minimum_image_size(extractor, last);
  if (image.width < min_size || image.height < min_size) {
    throw InvalidArgument(fmt::format("image {}x{} too small for layer {}: needs at least {}x{}",
                                      image.width, image.height, last, min_size, min_size));
  }

  int h = image.height, w = image.width;
  std::vector<float> x(3 * image.pixels());
  for (std::size_t p = 0; p < image.pixels(); ++p) {
    for (int c = 0; c < 3; ++c) {
      const float v = image.rgb[3 * p + c];
      x[c * image.pixels() + p] =
          extractor.normalize_input ? (v - kImageMean[c]) / kImageStd[c] : v;
    }
  }

  FeatureStack stack;
  stack.source_width = image.width;
  stack.source_height = image.height;
  stack.maps.resize(layers.size());
  if (cache) {
    *cache = {};
    cache->width = image.width;
    cache->height = image.height;
    cache->layers.assign(layers.begin(), layers.end());
    cache->argmax.resize(last + 1);
  }

  for (int i = 0; i <= last; ++i) {
    const Layer& layer = extractor.layers()[i];
    if (cache) {
      cache->heights.push_back(h);
      cache->widths.push_back(w);
    }
    std::vector<float> y;
    switch (layer.kind) {
      case LayerKind::kConv:
        y = conv_forward(extractor.convs()[layer.conv], x, h, w);
        break;
      case LayerKind::kRelu:
        y = x;
        for (float& v : y) v = std::max(v, 0.0f);
        break;
      case LayerKind::kMaxPool:
        y = pool_forward(x, layer.in_channels, h, w, cache ? &cache->argmax[i] : nullptr);
        h /= 2;
        w /= 2;
        break;
    }
    if (cache) cache->activations.push_back(std::move(x));
    x = std::move(y);
    for (std::size_t r = 0; r < layers.size(); ++r) {
      if (layers[r] != i) continue;
      stack.maps[r] = {i, layer.out_channels, h, w, x};
    }
  }
  if (cache) {
    cache->heights.push_back(h);
    cache->widths.push_back(w);
    cache->activations.push_back(std::move(x));
  }
  return stack;
}

std::vector<float> extract_backward(const FeatureExtractor& extractor, const ExtractCache& cache,
                                    std::span<const FeatureMap> upstream) {
  if (upstream.size() != cache.layers.size()) {
    throw InvalidArgument("extract_backward: one upstream map per extracted layer is required");
  }
  const int last = deepest(cache.layers);
  std::vector<float> g(cache.activations[last + 1].size(), 0.0f);
  for (int i = last; i >= 0; --i) {
    // Gradients flowing into the output of layer i.
    for (std::size_t r = 0; r < cache.layers.size(); ++r) {
      if (cache.layers[r] != i) continue;
      if (upstream[r].data.size() != g.size()) {
        throw InvalidArgument(fmt::format("extract_backward: upstream for layer {} has {} values, "
                                          "expected {}", i, upstream[r].data.size(), g.size()));
      }
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += upstream[r].data[k];
    }
    const Layer& layer = extractor.layers()[i];
    const int h = cache.heights[i], w = cache.widths[i];
    const std::vector<float>& in = cache.activations[i];
    switch (layer.kind) {
      case LayerKind::kConv:
        g = conv_backward(extractor.convs()[layer.conv], g, h, w);
        break;
      case LayerKind::kRelu:
        for (std::size_t k = 0; k < g.size(); ++k)
          if (!(in[k] > 0.0f)) g[k] = 0.0f;
        break;
      case LayerKind::kMaxPool: {
        std::vector<float> gi(in.size(), 0.0f);
        const int oh = h / 2, ow = w / 2;
        const auto& am = cache.argmax[i];
        for (int c = 0; c < layer.in_channels; ++c) {
          for (std::size_t o = 0; o < static_cast<std::size_t>(oh) * ow; ++o) {
            const std::size_t idx = static_cast<std::size_t>(c) * oh * ow + o;
            gi[static_cast<std::size_t>(c) * h * w + am[idx]] += g[idx];
          }
        }
        g = std::move(gi);
        break;
      }
    }
  }
  const std::size_t pixels = static_cast<std::size_t>(cache.width) * cache.height;
  std::vector<float> out(3 * pixels);
  for (std::size_t p = 0; p < pixels; ++p) {
    for (int c = 0; c < 3; ++c) {
      const float v = g[c * pixels + p];
      out[3 * p + c] = extractor.normalize_input ? v / kImageStd[c] : v;
    }
  }
  return out;
}

}  // namespace splat
