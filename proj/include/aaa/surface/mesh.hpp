#pragma once

// Triangle meshes, centerlines and the per-patient vascular model.

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "aaa/error.hpp"

namespace aaa::surface {

using Vec3 = Eigen::Vector3d;
using Face = std::array<std::uint32_t, 3>;

enum class Region : std::uint8_t { inlet = 0, aorta = 1, infrarenal = 2, iliac = 3, renal = 4 };

inline const char* region_name(Region r) {
  switch (r) {
    case Region::inlet: return "inlet";
    case Region::aorta: return "aorta";
    case Region::infrarenal: return "infrarenal";
    case Region::iliac: return "iliac";
    case Region::renal: return "renal";
  }
  return "?";
}

inline Region parse_region(const std::string& name) {
  for (int r = 0; r <= 4; ++r) {
    if (name == region_name(static_cast<Region>(r))) return static_cast<Region>(r);
  }
  throw InvalidArgument("unknown region '" + name + "'");
}

// "aorta" covers the whole abdominal aorta, which includes its infrarenal
// part; every other region only matches itself.
inline bool in_region(Region label, Region query) {
  if (query == Region::aorta) return label == Region::aorta || label == Region::infrarenal;
  return label == query;
}

struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;
  std::vector<Vec3> normals;
  std::vector<Region> regions;  // empty = unlabeled

  std::size_t size() const { return vertices.size(); }
  bool empty() const { return vertices.empty(); }
};

inline Vec3 face_normal_area(const TriMesh& m, const Face& f) {
  // Unnormalized: length is twice the triangle area.
  return (m.vertices[f[1]] - m.vertices[f[0]]).cross(m.vertices[f[2]] - m.vertices[f[0]]);
}

inline std::vector<Vec3> area_weighted_normals(const TriMesh& m) {
  std::vector<Vec3> n(m.size(), Vec3::Zero());
  for (const auto& f : m.faces) {
    const Vec3 fn = face_normal_area(m, f);
    for (auto v : f) n[v] += fn;
  }
  return n;
}

inline void compute_vertex_normals(TriMesh& m) {
  m.normals = area_weighted_normals(m);
  for (auto& n : m.normals) {
    const double len = n.norm();
    n = len > 0.0 ? Vec3(n / len) : Vec3::Zero();
  }
}

inline void validate(const TriMesh& m) {
  for (const auto& f : m.faces) {
    for (auto v : f) {
      if (v >= m.size()) throw DataError("mesh: face references vertex " + std::to_string(v) + " out of range");
    }
    if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) throw DataError("mesh: degenerate face");
  }
  if (!m.normals.empty() && m.normals.size() != m.size()) throw DataError("mesh: normal count mismatch");
  if (!m.regions.empty() && m.regions.size() != m.size()) throw DataError("mesh: region count mismatch");
  for (const auto& p : m.vertices) {
    if (!p.allFinite()) throw DataError("mesh: non-finite vertex");
  }
}

inline double mean_edge_length(const TriMesh& m) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& f : m.faces) {
    for (int k = 0; k < 3; ++k) {
      sum += (m.vertices[f[k]] - m.vertices[f[(k + 1) % 3]]).norm();
      ++count;
    }
  }
  if (count == 0) throw InvalidArgument("mean_edge_length: mesh has no faces");
  return sum / static_cast<double>(count);
}

// Undirected edges used by exactly one face, as (min, max) vertex pairs.
inline std::vector<std::pair<std::uint32_t, std::uint32_t>> boundary_edges(const TriMesh& m) {
  std::map<std::pair<std::uint32_t, std::uint32_t>, int> count;
  for (const auto& f : m.faces) {
    for (int k = 0; k < 3; ++k) {
      const auto a = f[k], b = f[(k + 1) % 3];
      ++count[{std::min(a, b), std::max(a, b)}];
    }
  }
  std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
  for (const auto& [e, c] : count) {
    if (c == 1) out.push_back(e);
  }
  return out;
}

inline std::vector<std::size_t> region_vertices(const TriMesh& m, Region r) {
  std::vector<std::size_t> out;
  if (m.regions.empty()) {
    out.resize(m.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = i;
    return out;
  }
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (in_region(m.regions[i], r)) out.push_back(i);
  }
  return out;
}

// Points on a regular barycentric grid over every face whose three
// vertices lie in `r`, at most `spacing` apart along the longest edge.
// Coarse meshes compared vertex-to-vertex mostly measure sampling phase;
// these samples measure the surfaces.
inline std::vector<Vec3> surface_samples(const TriMesh& m, Region r, double spacing) {
  if (!(spacing > 0.0)) throw InvalidArgument("surface_samples: spacing must be positive");
  const bool labelled = !m.regions.empty();
  std::vector<Vec3> out;
  for (const auto& f : m.faces) {
    if (labelled && !(in_region(m.regions[f[0]], r) && in_region(m.regions[f[1]], r) && in_region(m.regions[f[2]], r))) {
      continue;
    }
    const Vec3 &a = m.vertices[f[0]], &b = m.vertices[f[1]], &c = m.vertices[f[2]];
    const double longest = std::max({(b - a).norm(), (c - b).norm(), (a - c).norm()});
    const int n = std::max(1, static_cast<int>(std::ceil(longest / spacing - 1e-12)));
    for (int i = 0; i <= n; ++i) {
      for (int j = 0; i + j <= n; ++j) {
        const double u = static_cast<double>(i) / n, v = static_cast<double>(j) / n;
        out.push_back(a + u * (b - a) + v * (c - a));
      }
    }
  }
  return out;
}

inline std::vector<Vec3> gather(const std::vector<Vec3>& pts, const std::vector<std::size_t>& idx) {
  std::vector<Vec3> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(pts[i]);
  return out;
}

struct Centerline {
  std::vector<Vec3> points;
  std::vector<double> arclength;
  std::array<double, 2> infrarenal{0.0, 0.0};

  double length() const { return arclength.empty() ? 0.0 : arclength.back(); }

  // Unit tangent at point i by central difference along the polyline.
  Vec3 tangent(std::size_t i) const {
    const std::size_t a = i == 0 ? 0 : i - 1;
    const std::size_t b = std::min(i + 1, points.size() - 1);
    return (points[b] - points[a]).normalized();
  }
};

inline Centerline make_centerline(std::vector<Vec3> points, std::array<double, 2> infrarenal) {
  if (points.size() < 2) throw DataError("centerline: need at least 2 points");
  Centerline c;
  c.points = std::move(points);
  c.arclength.assign(c.points.size(), 0.0);
  for (std::size_t i = 1; i < c.points.size(); ++i) {
    const double step = (c.points[i] - c.points[i - 1]).norm();
    if (!(step > 0.0)) throw DataError("centerline: arclength must be strictly increasing");
    c.arclength[i] = c.arclength[i - 1] + step;
  }
  if (infrarenal[0] < 0.0 || infrarenal[1] > c.length() + 1e-9 || infrarenal[0] >= infrarenal[1]) {
    throw DataError("centerline: infrarenal range outside [0, length]");
  }
  c.infrarenal = infrarenal;
  return c;
}

// Point on the centerline at arclength s with its tangent.
inline std::pair<Vec3, Vec3> centerline_frame(const Centerline& c, double s) {
  const auto it = std::lower_bound(c.arclength.begin(), c.arclength.end(), s);
  std::size_t hi = static_cast<std::size_t>(std::clamp<long>(it - c.arclength.begin(), 1,
                                                             static_cast<long>(c.points.size()) - 1));
  const std::size_t lo = hi - 1;
  const double span = c.arclength[hi] - c.arclength[lo];
  const double u = std::clamp((s - c.arclength[lo]) / span, 0.0, 1.0);
  return {c.points[lo] + u * (c.points[hi] - c.points[lo]), (c.points[hi] - c.points[lo]).normalized()};
}

inline const std::array<const char*, 7> kFeatureNames = {"thickness", "radius", "geo_inlet", "geo_outlet",
                                                         "tawss",     "osi",    "hist_growth"};

struct VascularModel {
  TriMesh mesh;
  std::optional<TriMesh> lumen;
  Centerline centerline;
  std::map<std::string, std::vector<double>> features;
  double time = 0.0;  // years relative to the second scan

  const std::vector<double>& feature(const std::string& name) const {
    const auto it = features.find(name);
    if (it == features.end()) throw DataError("missing feature field '" + name + "'");
    if (it->second.size() != mesh.size()) throw DataError("feature '" + name + "' size mismatch");
    return it->second;
  }
};

}  // namespace aaa::surface
