#pragma once

// PLY (ascii / binary little endian) mesh I/O with per-vertex feature
// properties, and centerline JSON.

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "aaa/surface/mesh.hpp"

namespace aaa::surface {

enum class PlyFormat { ascii, binary };

struct PlyData {
  TriMesh mesh;
  std::map<std::string, std::vector<double>> features;
};

namespace detail {

enum class PlyType { i8, u8, i16, u16, i32, u32, f32, f64 };

inline PlyType ply_type(const std::string& s) {
  if (s == "char" || s == "int8") return PlyType::i8;
  if (s == "uchar" || s == "uint8") return PlyType::u8;
  if (s == "short" || s == "int16") return PlyType::i16;
  if (s == "ushort" || s == "uint16") return PlyType::u16;
  if (s == "int" || s == "int32") return PlyType::i32;
  if (s == "uint" || s == "uint32") return PlyType::u32;
  if (s == "float" || s == "float32") return PlyType::f32;
  if (s == "double" || s == "float64") return PlyType::f64;
  throw DataError("ply: unknown property type '" + s + "'");
}

inline std::size_t ply_size(PlyType t) {
  switch (t) {
    case PlyType::i8: case PlyType::u8: return 1;
    case PlyType::i16: case PlyType::u16: return 2;
    case PlyType::i32: case PlyType::u32: case PlyType::f32: return 4;
    case PlyType::f64: return 8;
  }
  return 0;
}

template <typename T>
T read_le(std::istream& in) {
  static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");
  T v;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw DataError("ply: unexpected end of file");
  return v;
}

inline double read_binary(std::istream& in, PlyType t) {
  switch (t) {
    case PlyType::i8: return read_le<std::int8_t>(in);
    case PlyType::u8: return read_le<std::uint8_t>(in);
    case PlyType::i16: return read_le<std::int16_t>(in);
    case PlyType::u16: return read_le<std::uint16_t>(in);
    case PlyType::i32: return read_le<std::int32_t>(in);
    case PlyType::u32: return read_le<std::uint32_t>(in);
    case PlyType::f32: return read_le<float>(in);
    case PlyType::f64: return read_le<double>(in);
  }
  return 0.0;
}

inline double read_ascii(std::istream& in, PlyType t) {
  double v;
  if (!(in >> v)) throw DataError("ply: malformed ascii body");
  return t == PlyType::f32 ? static_cast<double>(static_cast<float>(v)) : v;
}

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::f32;
  bool list = false;
  PlyType count_type = PlyType::u8;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> props;
};

template <typename T>
void write_le(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

inline std::string format_float(float v) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

}  // namespace detail

inline PlyData read_ply(std::istream& in) {
  std::string line;
  std::getline(in, line);
  if (line != "ply") throw DataError("ply: missing magic");
  bool binary = false;
  std::vector<detail::PlyElement> elements;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "binary_little_endian") binary = true;
      else if (fmt != "ascii") throw DataError("ply: unsupported format '" + fmt + "'");
    } else if (word == "element") {
      detail::PlyElement e;
      ls >> e.name >> e.count;
      elements.push_back(e);
    } else if (word == "property") {
      if (elements.empty()) throw DataError("ply: property before element");
      detail::PlyProperty p;
      std::string type;
      ls >> type;
      if (type == "list") {
        std::string ct, it;
        ls >> ct >> it;
        p.list = true;
        p.count_type = detail::ply_type(ct);
        p.type = detail::ply_type(it);
      } else {
        p.type = detail::ply_type(type);
      }
      ls >> p.name;
      elements.back().props.push_back(p);
    } else if (word == "end_header") {
      break;
    } else if (word != "comment" && word != "obj_info" && !word.empty()) {
      throw DataError("ply: unexpected header line '" + line + "'");
    }
  }

  PlyData data;
  auto read_value = [&](detail::PlyType t) { return binary ? detail::read_binary(in, t) : detail::read_ascii(in, t); };
  for (const auto& e : elements) {
    if (e.name == "vertex") {
      std::map<std::string, std::vector<double>> cols;
      for (std::size_t i = 0; i < e.count; ++i) {
        for (const auto& p : e.props) {
          if (p.list) {
            const auto k = static_cast<std::size_t>(read_value(p.count_type));
            for (std::size_t j = 0; j < k; ++j) read_value(p.type);
          } else {
            cols[p.name].push_back(read_value(p.type));
          }
        }
      }
      for (const char* axis : {"x", "y", "z"}) {
        if (!cols.count(axis)) throw DataError(std::string("ply: missing vertex property ") + axis);
      }
      data.mesh.vertices.resize(e.count);
      for (std::size_t i = 0; i < e.count; ++i) data.mesh.vertices[i] = Vec3(cols["x"][i], cols["y"][i], cols["z"][i]);
      if (cols.count("nx") && cols.count("ny") && cols.count("nz")) {
        data.mesh.normals.resize(e.count);
        for (std::size_t i = 0; i < e.count; ++i) {
          data.mesh.normals[i] = Vec3(cols["nx"][i], cols["ny"][i], cols["nz"][i]);
        }
      }
      if (cols.count("region")) {
        for (double r : cols["region"]) {
          if (r < 0 || r > 4) throw DataError("ply: region label out of range");
          data.mesh.regions.push_back(static_cast<Region>(static_cast<int>(r)));
        }
      }
      for (const char* name : kFeatureNames) {
        if (cols.count(name)) data.features[name] = cols[name];
      }
    } else if (e.name == "face") {
      for (std::size_t i = 0; i < e.count; ++i) {
        for (const auto& p : e.props) {
          if (!p.list) {
            read_value(p.type);
            continue;
          }
          const auto k = static_cast<std::size_t>(read_value(p.count_type));
          std::vector<std::uint32_t> idx(k);
          for (auto& v : idx) v = static_cast<std::uint32_t>(read_value(p.type));
          if (p.name != "vertex_indices" && p.name != "vertex_index") continue;
          if (k < 3) throw DataError("ply: face with fewer than 3 vertices");
          for (std::size_t j = 1; j + 1 < k; ++j) data.mesh.faces.push_back({idx[0], idx[j], idx[j + 1]});
        }
      }
    } else {
      for (std::size_t i = 0; i < e.count; ++i) {
        for (const auto& p : e.props) {
          const std::size_t k = p.list ? static_cast<std::size_t>(read_value(p.count_type)) : 1;
          for (std::size_t j = 0; j < k; ++j) read_value(p.type);
        }
      }
    }
  }
  validate(data.mesh);
  return data;
}

inline PlyData read_ply(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  return read_ply(in);
}

// Coordinates, normals and features are stored as float32.
inline void write_ply(std::ostream& out, const TriMesh& mesh, const std::map<std::string, std::vector<double>>& features,
                      PlyFormat format) {
  std::vector<std::pair<std::string, const std::vector<double>*>> cols;
  for (const char* name : kFeatureNames) {
    const auto it = features.find(name);
    if (it == features.end()) continue;
    if (it->second.size() != mesh.size()) throw InvalidArgument(std::string("write_ply: feature size mismatch: ") + name);
    cols.emplace_back(name, &it->second);
  }
  const bool normals = mesh.normals.size() == mesh.size();
  const bool regions = mesh.regions.size() == mesh.size();
  out << "ply\nformat " << (format == PlyFormat::binary ? "binary_little_endian" : "ascii") << " 1.0\n";
  out << "element vertex " << mesh.size() << "\n";
  out << "property float x\nproperty float y\nproperty float z\n";
  if (normals) out << "property float nx\nproperty float ny\nproperty float nz\n";
  for (const auto& [name, col] : cols) out << "property float " << name << "\n";
  if (regions) out << "property uchar region\n";
  out << "element face " << mesh.faces.size() << "\nproperty list uchar int vertex_indices\nend_header\n";

  std::vector<float> row;
  for (std::size_t i = 0; i < mesh.size(); ++i) {
    row.clear();
    for (int k = 0; k < 3; ++k) row.push_back(static_cast<float>(mesh.vertices[i][k]));
    if (normals) {
      for (int k = 0; k < 3; ++k) row.push_back(static_cast<float>(mesh.normals[i][k]));
    }
    for (const auto& [name, col] : cols) row.push_back(static_cast<float>((*col)[i]));
    if (format == PlyFormat::binary) {
      for (float v : row) detail::write_le(out, v);
      if (regions) detail::write_le(out, static_cast<std::uint8_t>(mesh.regions[i]));
    } else {
      for (std::size_t k = 0; k < row.size(); ++k) out << (k ? " " : "") << detail::format_float(row[k]);
      if (regions) out << ' ' << static_cast<int>(mesh.regions[i]);
      out << '\n';
    }
  }
  for (const auto& f : mesh.faces) {
    if (format == PlyFormat::binary) {
      detail::write_le(out, static_cast<std::uint8_t>(3));
      for (auto v : f) detail::write_le(out, static_cast<std::int32_t>(v));
    } else {
      out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
    }
  }
}

inline void write_ply(const std::string& path, const TriMesh& mesh,
                      const std::map<std::string, std::vector<double>>& features, PlyFormat format = PlyFormat::binary) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  write_ply(out, mesh, features, format);
}

inline nlohmann::json centerline_to_json(const Centerline& c) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : c.points) pts.push_back({p.x(), p.y(), p.z()});
  return {{"points", pts}, {"infrarenal", {c.infrarenal[0], c.infrarenal[1]}}};
}

inline Centerline centerline_from_json(const nlohmann::json& j) {
  try {
    std::vector<Vec3> pts;
    for (const auto& p : j.at("points")) pts.emplace_back(p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>());
    const auto& r = j.at("infrarenal");
    return make_centerline(std::move(pts), {r.at(0).get<double>(), r.at(1).get<double>()});
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("centerline json: ") + e.what());
  }
}

inline Centerline read_centerline(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("centerline '" + path + "': " + e.what());
  }
  return centerline_from_json(j);
}

inline void write_centerline(const std::string& path, const Centerline& c) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << centerline_to_json(c).dump(1) << '\n';
}

}  // namespace aaa::surface
