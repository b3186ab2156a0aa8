// SPDX-License-Identifier: Apache-2.0
#include "splat/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include <fmt/format.h>

#include "splat/error.hpp"

namespace splat {
namespace {

constexpr std::array<char, 4> kMagic{'S', 'S', 'P', 'L'};

class Writer {
 public:
  template <typename T>
  void put(T value) {
    std::array<char, sizeof(T)> buf;
    std::memcpy(buf.data(), &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf.begin(), buf.end());
    bytes_.insert(bytes_.end(), buf.begin(), buf.end());
  }
  void put_array(const std::vector<float>& values) {
    put<std::uint64_t>(values.size());
    for (float v : values) put(v);
  }
  void put_raw(const char* data, std::size_t n) { bytes_.insert(bytes_.end(), data, data + n); }
  const std::vector<char>& bytes() const { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class Reader {
 public:
  Reader(std::vector<char> bytes, std::string name) : bytes_(std::move(bytes)), name_(std::move(name)) {}

  void need(std::size_t n, std::uint64_t expected_total) const {
    if (pos_ + n > bytes_.size()) {
      throw DataError(fmt::format("{}: truncated checkpoint: expected at least {} bytes, got {}",
                                  name_, expected_total, bytes_.size()));
    }
  }
  template <typename T>
  T get() {
    need(sizeof(T), pos_ + sizeof(T));
    std::array<char, sizeof(T)> buf;
    std::memcpy(buf.data(), bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf.begin(), buf.end());
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, buf.data(), sizeof(T));
    return value;
  }
  std::vector<float> get_array(const char* field, std::uint64_t expected) {
    const auto count = get<std::uint64_t>();
    if (count != expected) {
      throw DataError(fmt::format("{}: checkpoint field '{}' has {} values, expected {}", name_,
                                  field, count, expected));
    }
    need(count * sizeof(float), pos_ + count * sizeof(float));
    std::vector<float> out(count);
    for (auto& v : out) v = get<float>();
    return out;
  }
  std::size_t position() const { return pos_; }
  std::size_t size() const { return bytes_.size(); }

 private:
  std::vector<char> bytes_;
  std::string name_;
  std::size_t pos_ = 0;
};

std::vector<char> serialize(const Checkpoint& ckpt) {
  const GaussianSet& g = ckpt.gaussians;
  g.validate();
  if (ckpt.classifier.num_classes > 0) ckpt.classifier.validate();
  Writer w;
  w.put_raw(kMagic.data(), kMagic.size());
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint64_t>(g.size());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(g.sh_degree));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.classifier.num_classes));
  w.put_array(g.positions);
  w.put_array(g.rotations);
  w.put_array(g.log_scales);
  w.put_array(g.opacity_logits);
  w.put_array(g.sh_coeffs);
  w.put_array(g.id_features);
  w.put_array(ckpt.classifier.weights);
  w.put_array(ckpt.classifier.bias);
  w.put<std::uint64_t>(ckpt.metadata.iterations);
  w.put<std::uint64_t>(ckpt.metadata.seed);
  w.put<std::uint64_t>(ckpt.metadata.config_hash);
  return w.bytes();
}

}  // namespace

std::uint64_t checkpoint_size(const Checkpoint& checkpoint) {
  return serialize(checkpoint).size();
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  const std::vector<char> bytes = serialize(checkpoint);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(fmt::format("cannot write checkpoint {}", path.string()));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError(fmt::format("failed writing checkpoint {}", path.string()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open checkpoint {}", path.string()));
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string name = path.string();
  if (bytes.size() < kMagic.size() + sizeof(std::uint32_t) ||
      !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw DataError(fmt::format("{}: not a checkpoint (bad magic; expected 'SSPL' version {})",
                                name, kCheckpointVersion));
  }
  Reader r(std::move(bytes), name);
  for (std::size_t i = 0; i < kMagic.size(); ++i) r.get<char>();
  Checkpoint ckpt;
  ckpt.version = r.get<std::uint32_t>();
  if (ckpt.version == 0 || ckpt.version > kCheckpointVersion) {
    throw DataError(fmt::format("{}: checkpoint version {} is not supported (this build reads up "
                                "to version {})",
                                name, ckpt.version, kCheckpointVersion));
  }
  const auto n = r.get<std::uint64_t>();
  const auto degree = r.get<std::uint32_t>();
  const auto classes = r.get<std::uint32_t>();
  if (degree > static_cast<std::uint32_t>(kMaxShDegree)) {
    throw DataError(fmt::format("{}: SH degree {} out of range", name, degree));
  }
  const std::uint64_t k = 3 * static_cast<std::uint64_t>(sh_basis_count(static_cast<int>(degree)));
  // Validate the total length before allocating anything sized by the header.
  const std::uint64_t floats = n * (3 + 4 + 3 + 1 + k + kIdFeatureDim) +
                               static_cast<std::uint64_t>(classes) * (kIdFeatureDim + 1);
  const std::uint64_t expected = 24 + 8 * 8 + floats * 4 + 3 * 8;
  if (r.size() != expected) {
    if (r.size() < expected) {
      throw DataError(fmt::format("{}: truncated checkpoint: expected {} bytes, got {}", name,
                                  expected, r.size()));
    }
    throw DataError(fmt::format("{}: checkpoint has {} trailing bytes (expected {} bytes)", name,
                                r.size() - expected, expected));
  }

  GaussianSet& g = ckpt.gaussians;
  g.sh_degree = static_cast<int>(degree);
  g.positions = r.get_array("positions", 3 * n);
  g.rotations = r.get_array("rotations", 4 * n);
  g.log_scales = r.get_array("log_scales", 3 * n);
  g.opacity_logits = r.get_array("opacity_logits", n);
  g.sh_coeffs = r.get_array("sh_coeffs", k * n);
  g.id_features = r.get_array("id_features", kIdFeatureDim * n);
  ckpt.classifier.num_classes = static_cast<int>(classes);
  ckpt.classifier.weights = r.get_array("classifier_weights", classes * kIdFeatureDim);
  ckpt.classifier.bias = r.get_array("classifier_bias", classes);
  ckpt.metadata.iterations = r.get<std::uint64_t>();
  ckpt.metadata.seed = r.get<std::uint64_t>();
  ckpt.metadata.config_hash = r.get<std::uint64_t>();
  return ckpt;
}

}  // namespace splat
