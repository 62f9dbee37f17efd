#pragma once

// Small analytic test meshes, built independently of the generator.

#include <cmath>
#include <functional>
#include <map>

#include "aaa/surface/mesh.hpp"

namespace aaa::testing {

using surface::Face;
using surface::TriMesh;
using surface::Vec3;

inline TriMesh icosphere(int subdivisions, double radius) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  TriMesh m;
  m.vertices = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  m.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
             {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
             {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (auto& v : m.vertices) v.normalize();
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> mid;
    auto midpoint = [&](std::uint32_t a, std::uint32_t b) {
      const auto key = std::make_pair(std::min(a, b), std::max(a, b));
      auto it = mid.find(key);
      if (it != mid.end()) return it->second;
      m.vertices.push_back((m.vertices[a] + m.vertices[b]).normalized());
      const auto id = static_cast<std::uint32_t>(m.vertices.size() - 1);
      mid[key] = id;
      return id;
    };
    std::vector<Face> next;
    for (const auto& f : m.faces) {
      const auto a = midpoint(f[0], f[1]), b = midpoint(f[1], f[2]), c = midpoint(f[2], f[0]);
      next.push_back({f[0], a, c});
      next.push_back({f[1], b, a});
      next.push_back({f[2], c, b});
      next.push_back({a, b, c});
    }
    m.faces = std::move(next);
  }
  for (auto& v : m.vertices) v *= radius;
  surface::compute_vertex_normals(m);
  return m;
}

// nx by ny vertex grid over [0, w] x [0, h] at height z.
inline TriMesh grid(std::size_t nx, std::size_t ny, double w, double h, double z = 0.0) {
  TriMesh m;
  for (std::size_t j = 0; j < ny; ++j) {
    for (std::size_t i = 0; i < nx; ++i) {
      m.vertices.emplace_back(w * static_cast<double>(i) / static_cast<double>(nx - 1),
                              h * static_cast<double>(j) / static_cast<double>(ny - 1), z);
    }
  }
  for (std::size_t j = 0; j + 1 < ny; ++j) {
    for (std::size_t i = 0; i + 1 < nx; ++i) {
      const auto a = static_cast<std::uint32_t>(j * nx + i);
      const auto b = a + 1, c = a + static_cast<std::uint32_t>(nx), d = c + 1;
      m.faces.push_back({a, b, d});
      m.faces.push_back({a, d, c});
    }
  }
  surface::compute_vertex_normals(m);
  return m;
}

// Open tube along +z with radius profile r(z), outward-facing triangles.
inline TriMesh tube(const std::function<double(double)>& radius, double length, std::size_t rings,
                    std::size_t segments) {
  TriMesh m;
  for (std::size_t i = 0; i < rings; ++i) {
    const double z = length * static_cast<double>(i) / static_cast<double>(rings - 1);
    for (std::size_t j = 0; j < segments; ++j) {
      const double th = 2.0 * M_PI * static_cast<double>(j) / static_cast<double>(segments);
      m.vertices.emplace_back(radius(z) * std::cos(th), radius(z) * std::sin(th), z);
    }
  }
  for (std::size_t i = 0; i + 1 < rings; ++i) {
    for (std::size_t j = 0; j < segments; ++j) {
      const auto a = static_cast<std::uint32_t>(i * segments + j);
      const auto b = static_cast<std::uint32_t>(i * segments + (j + 1) % segments);
      const auto c = a + static_cast<std::uint32_t>(segments), d = b + static_cast<std::uint32_t>(segments);
      m.faces.push_back({a, b, d});
      m.faces.push_back({a, d, c});
    }
  }
  surface::compute_vertex_normals(m);
  return m;
}

inline std::vector<Vec3> axis_points(double length, std::size_t count) {
  std::vector<Vec3> pts;
  for (std::size_t i = 0; i < count; ++i) pts.emplace_back(0, 0, length * static_cast<double>(i) / static_cast<double>(count - 1));
  return pts;
}

}  // namespace aaa::testing
