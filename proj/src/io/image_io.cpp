// SPDX-License-Identifier: Apache-2.0
#include "splat/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>

#include <fmt/format.h>
#include <png.h>

#include "splat/error.hpp"

namespace splat {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) {
    throw DataError(fmt::format("cannot open {} for {}", path.string(),
                                mode[0] == 'r' ? "reading" : "writing"));
  }
  return f;
}

[[noreturn]] void png_error_handler(png_structp png, png_const_charp msg) {
  auto* where = static_cast<const std::string*>(png_get_error_ptr(png));
  throw DataError(fmt::format("{}: PNG error: {}", where ? *where : "?", msg));
}

void png_warning_handler(png_structp, png_const_charp) {}

// Decoded PNG samples, one row-major buffer of channels * width * height.
struct RawPng {
  PngInfo info;
  std::vector<std::uint16_t> samples;
};

class PngReader {
 public:
  explicit PngReader(const std::filesystem::path& path)
      : name_(path.string()), file_(open_file(path, "rb")) {
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, file_.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
      throw DataError(fmt::format("{}: not a PNG file", name_));
    }
    h_.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &name_, png_error_handler,
                                    png_warning_handler);
    h_.info = png_create_info_struct(h_.png);
    png_ = h_.png;
    info_ = h_.info;
    png_init_io(png_, file_.get());
    png_set_sig_bytes(png_, 8);
    png_read_info(png_, info_);
  }
  PngReader(const PngReader&) = delete;
  PngReader& operator=(const PngReader&) = delete;

  PngInfo info() const {
    PngInfo out;
    out.width = static_cast<int>(png_get_image_width(png_, info_));
    out.height = static_cast<int>(png_get_image_height(png_, info_));
    out.channels = png_get_channels(png_, info_);
    out.bit_depth = png_get_bit_depth(png_, info_);
    if (png_get_color_type(png_, info_) == PNG_COLOR_TYPE_PALETTE) out.channels = 3;
    return out;
  }

  RawPng read() {
    const int color_type = png_get_color_type(png_, info_);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png_);
    if (color_type == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png_, info_) < 8) {
      png_set_expand_gray_1_2_4_to_8(png_);
    }
    if (png_get_bit_depth(png_, info_) == 16) png_set_swap(png_);  // host little-endian
    png_read_update_info(png_, info_);

    RawPng raw;
    raw.info = info();
    raw.info.channels = png_get_channels(png_, info_);
    raw.info.bit_depth = png_get_bit_depth(png_, info_);
    const std::size_t rowbytes = png_get_rowbytes(png_, info_);
    std::vector<unsigned char> data(rowbytes * raw.info.height);
    std::vector<png_bytep> rows(raw.info.height);
    for (int y = 0; y < raw.info.height; ++y) rows[y] = data.data() + y * rowbytes;
    png_read_image(png_, rows.data());

    const std::size_t count =
        static_cast<std::size_t>(raw.info.width) * raw.info.height * raw.info.channels;
    raw.samples.resize(count);
    if (raw.info.bit_depth == 16) {
      for (int y = 0; y < raw.info.height; ++y) {
        const auto* row = reinterpret_cast<const std::uint16_t*>(rows[y]);
        std::copy_n(row, static_cast<std::size_t>(raw.info.width) * raw.info.channels,
                    raw.samples.begin() + static_cast<std::size_t>(y) * raw.info.width *
                                              raw.info.channels);
      }
    } else {
      for (int y = 0; y < raw.info.height; ++y) {
        for (std::size_t k = 0; k < static_cast<std::size_t>(raw.info.width) * raw.info.channels;
             ++k) {
          raw.samples[static_cast<std::size_t>(y) * raw.info.width * raw.info.channels + k] =
              rows[y][k];
        }
      }
    }
    return raw;
  }

 private:
  struct Handles {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~Handles() {
      if (png) png_destroy_read_struct(&png, &info, nullptr);
    }
  };
  std::string name_;
  FilePtr file_;
  Handles h_;
  png_structp png_ = nullptr;
  png_infop info_ = nullptr;
};

void write_png(const std::filesystem::path& path, int width, int height, int color_type,
               int bit_depth, const std::vector<unsigned char>& data) {
  if (width <= 0 || height <= 0) {
    throw InvalidArgument(fmt::format("cannot write empty {}x{} image", width, height));
  }
  std::string name = path.string();
  FilePtr file = open_file(path, "wb");
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, &name, png_error_handler, png_warning_handler);
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_write_struct(p, i); }
  } guard{&png, &info};
  png_init_io(png, file.get());
  png_set_IHDR(png, info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const int channels = color_type == PNG_COLOR_TYPE_RGB ? 3 : 1;
  const std::size_t rowbytes = static_cast<std::size_t>(width) * channels * (bit_depth / 8);
  for (int y = 0; y < height; ++y) {
    png_write_row(png, const_cast<png_bytep>(data.data() + y * rowbytes));
  }
  png_write_end(png, nullptr);
}

}  // namespace

PngInfo read_png_info(const std::filesystem::path& path) { return PngReader(path).info(); }

Image load_image(const std::filesystem::path& path) {
  PngReader reader(path);
  const RawPng raw = reader.read();
  const float scale = raw.info.bit_depth == 16 ? 1.0f / 65535.0f : 1.0f / 255.0f;
  Image img(raw.info.width, raw.info.height);
  const int ch = raw.info.channels;
  for (std::size_t p = 0; p < img.pixels(); ++p) {
    for (int c = 0; c < 3; ++c) {
      // Gray (and gray+alpha) replicate the first sample; alpha is dropped.
      const int src = ch >= 3 ? c : 0;
      img.rgb[3 * p + c] = static_cast<float>(raw.samples[p * ch + src]) * scale;
    }
  }
  return img;
}

void save_image(const std::filesystem::path& path, const Image& image) {
  if (image.rgb.size() != image.pixels() * 3) {
    throw InvalidArgument("image buffer does not match its dimensions");
  }
  std::vector<unsigned char> data(image.rgb.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const float v = std::clamp(image.rgb[i], 0.0f, 1.0f);
    data[i] = static_cast<unsigned char>(std::lround(255.0f * v));
  }
  write_png(path, image.width, image.height, PNG_COLOR_TYPE_RGB, 8, data);
}

IdMap load_mask(const std::filesystem::path& path) {
  PngReader reader(path);
  const PngInfo header = reader.info();
  if (header.channels != 1) {
    throw DataError(fmt::format("{}: mask must be single-channel, found {} channels",
                                path.string(), header.channels));
  }
  const RawPng raw = reader.read();
  IdMap mask;
  mask.width = raw.info.width;
  mask.height = raw.info.height;
  mask.ids = raw.samples;
  return mask;
}

void save_mask(const std::filesystem::path& path, const IdMap& mask) {
  if (mask.ids.size() != static_cast<std::size_t>(mask.width) * mask.height) {
    throw InvalidArgument("mask buffer does not match its dimensions");
  }
  std::vector<unsigned char> data(mask.ids.size() * 2);
  for (std::size_t i = 0; i < mask.ids.size(); ++i) {
    data[2 * i] = static_cast<unsigned char>(mask.ids[i] >> 8);  // PNG is big-endian
    data[2 * i + 1] = static_cast<unsigned char>(mask.ids[i] & 0xff);
  }
  write_png(path, mask.width, mask.height, PNG_COLOR_TYPE_GRAY, 16, data);
}

Image resize_bilinear(const Image& image, int width, int height) {
  if (width <= 0 || height <= 0) {
    throw InvalidArgument(fmt::format("resize target {}x{} must be positive", width, height));
  }
  if (width == image.width && height == image.height) return image;
  Image out(width, height);
  const float sx = static_cast<float>(image.width) / static_cast<float>(width);
  const float sy = static_cast<float>(image.height) / static_cast<float>(height);
  for (int y = 0; y < height; ++y) {
    const float fy = std::clamp((static_cast<float>(y) + 0.5f) * sy - 0.5f, 0.0f,
                                static_cast<float>(image.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, image.height - 1);
    const float wy = fy - static_cast<float>(y0);
    for (int x = 0; x < width; ++x) {
      const float fx = std::clamp((static_cast<float>(x) + 0.5f) * sx - 0.5f, 0.0f,
                                  static_cast<float>(image.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, image.width - 1);
      const float wx = fx - static_cast<float>(x0);
      for (int c = 0; c < 3; ++c) {
        auto at = [&](int xx, int yy) {
          return image.rgb[3 * (static_cast<std::size_t>(yy) * image.width + xx) + c];
        };
        const float top = at(x0, y0) * (1 - wx) + at(x1, y0) * wx;
        const float bottom = at(x0, y1) * (1 - wx) + at(x1, y1) * wx;
        out.rgb[3 * (static_cast<std::size_t>(y) * width + x) + c] = top * (1 - wy) + bottom * wy;
      }
    }
  }
  return out;
}

double psnr(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height) {
    throw InvalidArgument(fmt::format("PSNR of {}x{} vs {}x{} images", a.width, a.height,
                                      b.width, b.height));
  }
  double se = 0.0;
  for (std::size_t i = 0; i < a.rgb.size(); ++i) {
    const double d = static_cast<double>(a.rgb[i]) - b.rgb[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.rgb.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

}  // namespace splat
