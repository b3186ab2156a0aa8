// SPDX-License-Identifier: Apache-2.0
#include "splat/ply.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include <fmt/format.h>

#include "splat/error.hpp"

namespace splat {
namespace {

enum class ScalarType { kInt8, kUint8, kInt16, kUint16, kInt32, kUint32, kFloat32, kFloat64 };

std::optional<ScalarType> parse_type(const std::string& name) {
  if (name == "char" || name == "int8") return ScalarType::kInt8;
  if (name == "uchar" || name == "uint8") return ScalarType::kUint8;
  if (name == "short" || name == "int16") return ScalarType::kInt16;
  if (name == "ushort" || name == "uint16") return ScalarType::kUint16;
  if (name == "int" || name == "int32") return ScalarType::kInt32;
  if (name == "uint" || name == "uint32") return ScalarType::kUint32;
  if (name == "float" || name == "float32") return ScalarType::kFloat32;
  if (name == "double" || name == "float64") return ScalarType::kFloat64;
  return std::nullopt;
}

std::size_t type_size(ScalarType t) {
  switch (t) {
    case ScalarType::kInt8:
    case ScalarType::kUint8: return 1;
    case ScalarType::kInt16:
    case ScalarType::kUint16: return 2;
    case ScalarType::kInt32:
    case ScalarType::kUint32:
    case ScalarType::kFloat32: return 4;
    case ScalarType::kFloat64: return 8;
  }
  return 0;
}

struct Property {
  std::string name;
  ScalarType type = ScalarType::kFloat32;
  bool is_list = false;
  ScalarType count_type = ScalarType::kUint8;
};

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<Property> properties;
};

enum class Format { kAscii, kBinaryLittleEndian };

template <typename T>
T read_le(std::istream& in) {
  std::array<char, sizeof(T)> buf;
  in.read(buf.data(), sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf.begin(), buf.end());
  T value;
  std::memcpy(&value, buf.data(), sizeof(T));
  return value;
}

double read_binary(std::istream& in, ScalarType t) {
  switch (t) {
    case ScalarType::kInt8: return read_le<std::int8_t>(in);
    case ScalarType::kUint8: return read_le<std::uint8_t>(in);
    case ScalarType::kInt16: return read_le<std::int16_t>(in);
    case ScalarType::kUint16: return read_le<std::uint16_t>(in);
    case ScalarType::kInt32: return read_le<std::int32_t>(in);
    case ScalarType::kUint32: return read_le<std::uint32_t>(in);
    case ScalarType::kFloat32: return read_le<float>(in);
    case ScalarType::kFloat64: return read_le<double>(in);
  }
  return 0.0;
}

double color_scale(ScalarType t) {
  switch (t) {
    case ScalarType::kUint8: return 1.0 / 255.0;
    case ScalarType::kUint16: return 1.0 / 65535.0;
    case ScalarType::kFloat32:
    case ScalarType::kFloat64: return 1.0;
    default: return 1.0 / 255.0;
  }
}

template <typename T>
void write_le(std::ostream& out, T value) {
  std::array<char, sizeof(T)> buf;
  std::memcpy(buf.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf.begin(), buf.end());
  out.write(buf.data(), sizeof(T));
}

}  // namespace

PointCloud load_ply(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open {}", path.string()));
  const std::string name = path.string();

  auto fail = [&](int line, const std::string& what) -> DataError {
    return DataError(fmt::format("{}:{}: malformed PLY header: {}", name, line, what));
  };

  std::string line;
  int line_no = 0;
  auto next_line = [&]() {
    if (!std::getline(in, line)) return false;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };

  if (!next_line() || line != "ply") throw fail(1, "missing 'ply' magic");
  std::optional<Format> format;
  std::vector<Element> elements;
  bool ended = false;
  while (next_line()) {
    std::istringstream ls(line);
    std::string keyword;
    ls >> keyword;
    if (keyword.empty() || keyword == "comment" || keyword == "obj_info") continue;
    if (keyword == "format") {
      std::string kind, version;
      ls >> kind >> version;
      if (kind == "ascii") {
        format = Format::kAscii;
      } else if (kind == "binary_little_endian") {
        format = Format::kBinaryLittleEndian;
      } else {
        throw fail(line_no, fmt::format("unsupported format '{}'", kind));
      }
      if (version != "1.0") throw fail(line_no, fmt::format("unsupported version '{}'", version));
    } else if (keyword == "element") {
      Element e;
      long long count = -1;
      ls >> e.name >> count;
      if (e.name.empty() || count < 0 || ls.fail()) throw fail(line_no, "bad element line");
      e.count = static_cast<std::size_t>(count);
      elements.push_back(std::move(e));
    } else if (keyword == "property") {
      if (elements.empty()) throw fail(line_no, "property before any element");
      Property p;
      std::string type;
      ls >> type;
      if (type == "list") {
        std::string count_type, item_type;
        ls >> count_type >> item_type >> p.name;
        auto ct = parse_type(count_type);
        auto it = parse_type(item_type);
        if (!ct || !it || p.name.empty()) throw fail(line_no, "bad list property");
        p.is_list = true;
        p.count_type = *ct;
        p.type = *it;
      } else {
        auto t = parse_type(type);
        ls >> p.name;
        if (!t || p.name.empty()) {
          throw fail(line_no, fmt::format("bad property type '{}'", type));
        }
        p.type = *t;
      }
      elements.back().properties.push_back(p);
    } else if (keyword == "end_header") {
      ended = true;
      break;
    } else {
      throw fail(line_no, fmt::format("unknown keyword '{}'", keyword));
    }
  }
  if (!ended) throw fail(line_no, "missing end_header");
  if (!format) throw fail(line_no, "missing format line");

  const Element* vertex = nullptr;
  for (const auto& e : elements) {
    if (e.name == "vertex") vertex = &e;
  }
  if (!vertex) throw fail(line_no, "no vertex element");

  auto find = [&](const char* prop) -> int {
    for (std::size_t i = 0; i < vertex->properties.size(); ++i) {
      if (vertex->properties[i].name == prop && !vertex->properties[i].is_list) {
        return static_cast<int>(i);
      }
    }
    return -1;
  };
  const std::array<int, 3> xyz{find("x"), find("y"), find("z")};
  const std::array<int, 3> rgb{find("red"), find("green"), find("blue")};
  if (xyz[0] < 0 || xyz[1] < 0 || xyz[2] < 0) throw fail(line_no, "vertex lacks x, y, z");
  const bool has_colors = rgb[0] >= 0 && rgb[1] >= 0 && rgb[2] >= 0;

  PointCloud cloud;
  cloud.has_colors = has_colors;
  cloud.positions.reserve(vertex->count * 3);
  cloud.colors.assign(vertex->count * 3, 0.5f);

  std::vector<double> values;
  for (const auto& e : elements) {
    const bool is_vertex = &e == vertex;
    for (std::size_t row = 0; row < e.count; ++row) {
      values.clear();
      if (*format == Format::kAscii) {
        if (!next_line()) {
          throw DataError(fmt::format("{}: unexpected end of data in element '{}' row {}", name,
                                      e.name, row));
        }
        std::istringstream ls(line);
        for (const auto& p : e.properties) {
          double v = 0.0;
          if (p.is_list) {
            long long n = 0;
            ls >> n;
            for (long long k = 0; k < n; ++k) ls >> v;
          } else {
            ls >> v;
            values.push_back(v);
          }
          if (ls.fail()) {
            throw DataError(fmt::format("{}:{}: bad value for '{}'", name, line_no, p.name));
          }
          if (p.is_list) values.push_back(0.0);
        }
      } else {
        for (const auto& p : e.properties) {
          if (p.is_list) {
            const auto n = static_cast<long long>(read_binary(in, p.count_type));
            in.seekg(static_cast<std::streamoff>(n * type_size(p.type)), std::ios::cur);
            values.push_back(0.0);
          } else {
            values.push_back(read_binary(in, p.type));
          }
        }
        if (!in) {
          throw DataError(fmt::format("{}: truncated binary data in element '{}' row {}", name,
                                      e.name, row));
        }
      }
      if (!is_vertex) continue;
      for (int k = 0; k < 3; ++k) cloud.positions.push_back(static_cast<float>(values[xyz[k]]));
      if (has_colors) {
        for (int k = 0; k < 3; ++k) {
          const double scale = color_scale(vertex->properties[rgb[k]].type);
          cloud.colors[3 * row + k] = static_cast<float>(values[rgb[k]] * scale);
        }
      }
    }
  }
  return cloud;
}

void save_ply(const std::filesystem::path& path, const PointCloud& cloud, bool binary) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(fmt::format("cannot write {}", path.string()));
  const bool colors = cloud.has_colors && cloud.colors.size() == cloud.positions.size();
  out << "ply\n"
      << "format " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n"
      << "element vertex " << cloud.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n";
  if (colors) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "end_header\n";

  auto to_byte = [](float c) {
    return static_cast<std::uint8_t>(std::lround(255.0f * std::clamp(c, 0.0f, 1.0f)));
  };
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (binary) {
      for (int k = 0; k < 3; ++k) write_le<float>(out, cloud.positions[3 * i + k]);
      if (colors) {
        for (int k = 0; k < 3; ++k) write_le<std::uint8_t>(out, to_byte(cloud.colors[3 * i + k]));
      }
    } else {
      // max_digits10 keeps the ascii encoding exact.
      out << fmt::format("{:.9g} {:.9g} {:.9g}", cloud.positions[3 * i],
                         cloud.positions[3 * i + 1], cloud.positions[3 * i + 2]);
      if (colors) {
        out << fmt::format(" {} {} {}", to_byte(cloud.colors[3 * i]),
                           to_byte(cloud.colors[3 * i + 1]), to_byte(cloud.colors[3 * i + 2]));
      }
      out << '\n';
    }
  }
  if (!out) throw DataError(fmt::format("failed writing {}", path.string()));
}

}  // namespace splat
