#include "gridpose/ply.hpp"

#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gridpose/errors.hpp"

namespace gridpose {

namespace {

static_assert(std::endian::native == std::endian::little,
              "binary PLY io assumes a little-endian host");

enum class ScalarType { i8, u8, i16, u16, i32, u32, f32, f64 };

std::size_t scalar_size(ScalarType t) {
  switch (t) {
    case ScalarType::i8:
    case ScalarType::u8:
      return 1;
    case ScalarType::i16:
    case ScalarType::u16:
      return 2;
    case ScalarType::i32:
    case ScalarType::u32:
    case ScalarType::f32:
      return 4;
    case ScalarType::f64:
      return 8;
  }
  return 0;
}

bool parse_scalar_type(const std::string& name, ScalarType* out) {
  if (name == "char" || name == "int8") *out = ScalarType::i8;
  else if (name == "uchar" || name == "uint8") *out = ScalarType::u8;
  else if (name == "short" || name == "int16") *out = ScalarType::i16;
  else if (name == "ushort" || name == "uint16") *out = ScalarType::u16;
  else if (name == "int" || name == "int32") *out = ScalarType::i32;
  else if (name == "uint" || name == "uint32") *out = ScalarType::u32;
  else if (name == "float" || name == "float32") *out = ScalarType::f32;
  else if (name == "double" || name == "float64") *out = ScalarType::f64;
  else return false;
  return true;
}

struct PlyProperty {
  std::string name;
  bool is_list = false;
  ScalarType type = ScalarType::f32;        // element type for lists
  ScalarType count_type = ScalarType::u8;   // lists only
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::size_t header_offset = 0;
  std::vector<PlyProperty> properties;
};

// Cursor over the whole file kept as one buffer; offsets feed ParseError.
struct Cursor {
  const std::string& buf;
  std::size_t pos = 0;

  bool eof() const { return pos >= buf.size(); }

  std::string_view line() {
    const std::size_t start = pos;
    std::size_t end = buf.find('\n', start);
    if (end == std::string::npos) {
      pos = buf.size();
      return std::string_view(buf).substr(start);
    }
    pos = end + 1;
    std::size_t len = end - start;
    if (len > 0 && buf[start + len - 1] == '\r') --len;
    return std::string_view(buf).substr(start, len);
  }

  // Next whitespace-separated token (ascii body).
  std::string_view token() {
    while (pos < buf.size() && std::isspace(static_cast<unsigned char>(buf[pos]))) ++pos;
    if (pos >= buf.size()) {
      throw ParseError("unexpected end of file", pos);
    }
    const std::size_t start = pos;
    while (pos < buf.size() && !std::isspace(static_cast<unsigned char>(buf[pos]))) ++pos;
    return std::string_view(buf).substr(start, pos - start);
  }

  double ascii_number() {
    const std::size_t at = pos;
    const std::string_view tok = token();
    double value = 0.0;
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), value);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
      throw ParseError("malformed number '" + std::string(tok) + "'", at);
    }
    return value;
  }

  double binary_scalar(ScalarType t) {
    const std::size_t size = scalar_size(t);
    if (pos + size > buf.size()) {
      throw ParseError("binary payload truncated", pos);
    }
    const char* p = buf.data() + pos;
    pos += size;
    switch (t) {
      case ScalarType::i8: return *reinterpret_cast<const std::int8_t*>(p);
      case ScalarType::u8: return *reinterpret_cast<const std::uint8_t*>(p);
      case ScalarType::i16: { std::int16_t v; std::memcpy(&v, p, 2); return v; }
      case ScalarType::u16: { std::uint16_t v; std::memcpy(&v, p, 2); return v; }
      case ScalarType::i32: { std::int32_t v; std::memcpy(&v, p, 4); return v; }
      case ScalarType::u32: { std::uint32_t v; std::memcpy(&v, p, 4); return v; }
      case ScalarType::f32: { float v; std::memcpy(&v, p, 4); return v; }
      case ScalarType::f64: { double v; std::memcpy(&v, p, 8); return v; }
    }
    return 0.0;
  }
};

std::vector<std::string> split_words(std::string_view line) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) words.emplace_back(line.substr(start, i - start));
  }
  return words;
}

void atomic_write(const std::filesystem::path& path, const std::string& bytes) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw Error("cannot open for writing: " + tmp.string());
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
      throw Error("short write: " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

TriangleMesh load_ply(const std::filesystem::path& path,
                      const PlyLoadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error("cannot open: " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string buf = ss.str();
  Cursor cur{buf};

  if (std::string(cur.line()) != "ply") {
    throw ParseError("missing 'ply' magic", 0);
  }

  bool binary = false;
  bool format_seen = false;
  std::vector<PlyElement> elements;
  bool header_done = false;
  while (!header_done) {
    if (cur.eof()) {
      throw ParseError("header without end_header", cur.pos);
    }
    const std::size_t line_offset = cur.pos;
    const auto words = split_words(cur.line());
    if (words.empty() || words[0] == "comment" || words[0] == "obj_info") {
      continue;
    }
    if (words[0] == "format") {
      if (words.size() < 2) {
        throw ParseError("malformed format line", line_offset);
      }
      if (words[1] == "ascii") {
        binary = false;
      } else if (words[1] == "binary_little_endian") {
        binary = true;
      } else if (words[1] == "binary_big_endian") {
        throw UnsupportedFormat("big-endian PLY is not supported: " + path.string());
      } else {
        throw ParseError("unknown format '" + words[1] + "'", line_offset);
      }
      format_seen = true;
    } else if (words[0] == "element") {
      if (words.size() != 3) {
        throw ParseError("malformed element line", line_offset);
      }
      PlyElement el;
      el.name = words[1];
      el.header_offset = line_offset;
      try {
        el.count = std::stoull(words[2]);
      } catch (const std::exception&) {
        throw ParseError("malformed element count '" + words[2] + "'", line_offset);
      }
      elements.push_back(el);
    } else if (words[0] == "property") {
      if (elements.empty()) {
        throw ParseError("property before any element", line_offset);
      }
      PlyProperty prop;
      if (words.size() == 5 && words[1] == "list") {
        prop.is_list = true;
        if (!parse_scalar_type(words[2], &prop.count_type) ||
            !parse_scalar_type(words[3], &prop.type)) {
          throw ParseError("unknown property type", line_offset);
        }
        prop.name = words[4];
      } else if (words.size() == 3) {
        if (!parse_scalar_type(words[1], &prop.type)) {
          throw ParseError("unknown property type '" + words[1] + "'", line_offset);
        }
        prop.name = words[2];
      } else {
        throw ParseError("malformed property line", line_offset);
      }
      elements.back().properties.push_back(prop);
    } else if (words[0] == "end_header") {
      header_done = true;
    } else {
      throw ParseError("unknown header keyword '" + words[0] + "'", line_offset);
    }
  }
  if (!format_seen) {
    throw ParseError("header missing format line", 0);
  }

  TriangleMesh mesh;
  bool saw_vertex = false;

  for (const PlyElement& el : elements) {
    if (el.name == "vertex") {
      saw_vertex = true;
      if (el.count == 0) {
        throw ParseError("vertex element declares zero vertices", el.header_offset);
      }
      int xi = -1, yi = -1, zi = -1;
      for (std::size_t i = 0; i < el.properties.size(); ++i) {
        const PlyProperty& p = el.properties[i];
        if (p.is_list) continue;
        if (p.name == "x") xi = static_cast<int>(i);
        if (p.name == "y") yi = static_cast<int>(i);
        if (p.name == "z") zi = static_cast<int>(i);
      }
      if (xi < 0 || yi < 0 || zi < 0) {
        throw ParseError("vertex element lacks x/y/z properties", el.header_offset);
      }
      for (int c : {xi, yi, zi}) {
        const ScalarType t = el.properties[c].type;
        if (t != ScalarType::f32 && t != ScalarType::f64) {
          throw UnsupportedFormat("non-floating vertex coordinates: " + path.string());
        }
      }
      mesh.vertices.reserve(el.count);
      std::vector<double> row(el.properties.size(), 0.0);
      for (std::size_t v = 0; v < el.count; ++v) {
        for (std::size_t p = 0; p < el.properties.size(); ++p) {
          const PlyProperty& prop = el.properties[p];
          if (prop.is_list) {
            const double cnt = binary ? cur.binary_scalar(prop.count_type)
                                      : cur.ascii_number();
            for (int k = 0; k < static_cast<int>(cnt); ++k) {
              if (binary) cur.binary_scalar(prop.type);
              else cur.ascii_number();
            }
            row[p] = 0.0;
          } else {
            row[p] = binary ? cur.binary_scalar(prop.type) : cur.ascii_number();
          }
        }
        mesh.vertices.emplace_back(row[xi], row[yi], row[zi]);
      }
    } else if (el.name == "face") {
      int list_idx = -1;
      for (std::size_t i = 0; i < el.properties.size(); ++i) {
        const PlyProperty& p = el.properties[i];
        if (p.is_list && (p.name == "vertex_indices" || p.name == "vertex_index")) {
          list_idx = static_cast<int>(i);
        }
      }
      if (list_idx < 0 && el.count > 0) {
        throw ParseError("face element lacks a vertex index list", el.header_offset);
      }
      std::vector<int> poly;
      for (std::size_t f = 0; f < el.count; ++f) {
        poly.clear();
        for (std::size_t p = 0; p < el.properties.size(); ++p) {
          const PlyProperty& prop = el.properties[p];
          if (!prop.is_list) {
            if (binary) cur.binary_scalar(prop.type);
            else cur.ascii_number();
            continue;
          }
          const std::size_t at = cur.pos;
          const double cnt = binary ? cur.binary_scalar(prop.count_type)
                                    : cur.ascii_number();
          if (cnt < 0 || cnt != std::floor(cnt)) {
            throw ParseError("malformed face list count", at);
          }
          for (int k = 0; k < static_cast<int>(cnt); ++k) {
            const double value = binary ? cur.binary_scalar(prop.type)
                                        : cur.ascii_number();
            if (static_cast<int>(p) == list_idx) {
              poly.push_back(static_cast<int>(value));
            }
          }
        }
        if (poly.size() < 3) {
          throw ParseError("face with fewer than 3 vertices", cur.pos);
        }
        for (int idx : poly) {
          if (idx < 0 || static_cast<std::size_t>(idx) >= mesh.vertices.size()) {
            throw ParseError("face index " + std::to_string(idx) + " out of range",
                             cur.pos);
          }
        }
        for (std::size_t k = 1; k + 1 < poly.size(); ++k) {
          mesh.triangles.push_back({poly[0], poly[k], poly[k + 1]});
        }
      }
    } else if (el.count > 0) {
      throw UnsupportedFormat("unsupported element '" + el.name +
                              "' in: " + path.string());
    }
  }

  if (!saw_vertex) {
    throw ParseError("no vertex element", 0);
  }

  if (options.millimeter_units) {
    for (Vec3& v : mesh.vertices) {
      v /= 1000.0;
    }
  }
  return mesh;
}

void save_ply(const std::filesystem::path& path, const TriangleMesh& mesh,
              const PlySaveOptions& options) {
  const double scale = options.millimeter_units ? 1000.0 : 1.0;
  std::string out;
  out += "ply\n";
  out += options.format == PlyFormat::ascii ? "format ascii 1.0\n"
                                            : "format binary_little_endian 1.0\n";
  out += "element vertex " + std::to_string(mesh.vertices.size()) + "\n";
  out += "property float x\nproperty float y\nproperty float z\n";
  out += "element face " + std::to_string(mesh.triangles.size()) + "\n";
  out += "property list uchar int vertex_indices\n";
  out += "end_header\n";

  if (options.format == PlyFormat::ascii) {
    char num[64];
    for (const Vec3& v : mesh.vertices) {
      for (int c = 0; c < 3; ++c) {
        const float f = static_cast<float>(v(c) * scale);
        const auto res = std::to_chars(num, num + sizeof(num), f);
        out.append(num, res.ptr);
        out += c == 2 ? '\n' : ' ';
      }
    }
    for (const auto& t : mesh.triangles) {
      out += "3 " + std::to_string(t[0]) + " " + std::to_string(t[1]) + " " +
             std::to_string(t[2]) + "\n";
    }
  } else {
    for (const Vec3& v : mesh.vertices) {
      for (int c = 0; c < 3; ++c) {
        const float f = static_cast<float>(v(c) * scale);
        char bytes[4];
        std::memcpy(bytes, &f, 4);
        out.append(bytes, 4);
      }
    }
    for (const auto& t : mesh.triangles) {
      out += static_cast<char>(3);
      for (int c = 0; c < 3; ++c) {
        const std::int32_t idx = t[c];
        char bytes[4];
        std::memcpy(bytes, &idx, 4);
        out.append(bytes, 4);
      }
    }
  }
  atomic_write(path, out);
}

}  // namespace gridpose
