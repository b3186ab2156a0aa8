// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "splat/image_io.hpp"

namespace splat {

/// Channel plan entry: a positive value is a 3x3 conv (followed by relu)
/// with that many output channels, kPool is a 2x2 stride-2 max pool.
inline constexpr int kPool = 0;

/// VGG-16 feature plan (64,64,M,128,128,M,256,256,256,M,512,512,512,M,512,512,512,M).
std::vector<int> vgg16_plan();

enum class LayerKind { kConv, kRelu, kMaxPool };

struct Layer {
  LayerKind kind;
  int conv = -1;  // index into the conv list for kConv
  int in_channels = 0;
  int out_channels = 0;
};

struct ConvWeights {
  int out_channels = 0;
  int in_channels = 0;
  std::vector<float> weights;  // out x in x 3 x 3, row-major
  std::vector<float> bias;     // out
};

inline constexpr std::array<float, 3> kImageMean{0.485f, 0.456f, 0.406f};
inline constexpr std::array<float, 3> kImageStd{0.229f, 0.224f, 0.225f};

/// Fixed convolutional feature extractor. Layer indices address the
/// flattened conv / relu / pool sequence, so for VGG-16 index 15 is the relu
/// after the third conv of block 3.
class FeatureExtractor {
 public:
  /// Builds from a plan and weights for its first convs.size() convs; the
  /// layer list stops at the first conv without weights.
  FeatureExtractor(std::vector<int> plan, std::vector<ConvWeights> convs);

  /// Seeded orthogonal-random weights (He-style gain, zero bias) for the
  /// whole plan.
  static FeatureExtractor random(std::uint64_t seed, std::vector<int> plan = vgg16_plan());

  /// Reads an FNET weight file; shapes are checked against `plan`.
  static FeatureExtractor load(const std::filesystem::path& path,
                               std::vector<int> plan = vgg16_plan());
  void save(const std::filesystem::path& path) const;

  const std::vector<Layer>& layers() const { return layers_; }
  const std::vector<ConvWeights>& convs() const { return convs_; }
  const std::vector<int>& plan() const { return plan_; }
  int num_layers() const { return static_cast<int>(layers_.size()); }
  /// Channels of the activation at `layer`.
  int channels(int layer) const;
  /// Pools at or before `layer`.
  int pools_through(int layer) const;

  /// Subtract the ImageNet mean and divide by its std before the first conv.
  bool normalize_input = true;

 private:
  std::vector<int> plan_;
  std::vector<ConvWeights> convs_;
  std::vector<Layer> layers_;
};

/// C x H x W activation.
struct FeatureMap {
  int layer = 0;
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  std::size_t locations() const { return static_cast<std::size_t>(height) * width; }
};

struct FeatureStack {
  int source_width = 0;
  int source_height = 0;
  std::vector<FeatureMap> maps;  // in requested order

  const FeatureMap& at_layer(int layer) const;
};

/// Forward activations kept for extract_backward.
struct ExtractCache {
  int width = 0;
  int height = 0;
  std::vector<int> layers;
  std::vector<std::vector<float>> activations;  // input of every layer, plus final output
  std::vector<std::vector<std::uint32_t>> argmax;  // per pool layer
  std::vector<int> heights;
  std::vector<int> widths;
};

/// Smallest image side accepted for `layer`.
int minimum_image_size(const FeatureExtractor& extractor, int layer);

FeatureStack extract(const FeatureExtractor& extractor, const Image& image,
                     std::span<const int> layers, ExtractCache* cache = nullptr);

/// Input gradient (H x W x 3, same layout as Image::rgb) of
/// sum_l <upstream_l, activation_l>; upstream maps are in the order of the
/// layers passed to extract.
std::vector<float> extract_backward(const FeatureExtractor& extractor, const ExtractCache& cache,
                                    std::span<const FeatureMap> upstream);

/// Receptive field side length, in input pixels, of one activation.
int receptive_field_size(const FeatureExtractor& extractor, int layer);

}  // namespace splat
