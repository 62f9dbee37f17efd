#pragma once

// Per-vertex morphology (thickness, radius, tangent planes) and the
// centerline-based diameter and volume measurements.

#include <functional>
#include <map>
#include <numeric>

#include "aaa/surface/spatial.hpp"

namespace aaa::surface {

enum class DistanceTarget { triangles, vertices };

// Distance from each vertex of `from` to the surface `to`.
inline std::vector<double> closest_surface_distance(const TriMesh& from, const TriMesh& to,
                                                    DistanceTarget target = DistanceTarget::triangles) {
  if (to.empty()) throw InvalidArgument("closest_surface_distance: empty target mesh");
  std::vector<double> d(from.size());
  if (target == DistanceTarget::vertices || to.faces.empty()) {
    const PointIndex index(to.vertices);
    for (std::size_t i = 0; i < from.size(); ++i) d[i] = std::sqrt(index.nearest(from.vertices[i]).squared_distance);
  } else {
    const TriangleIndex index(to);
    for (std::size_t i = 0; i < from.size(); ++i) d[i] = std::sqrt(index.closest(from.vertices[i]).squared_distance);
  }
  return d;
}

struct TangentPlane {
  Vec3 normal;
  double offset;
};

inline std::vector<TangentPlane> tangent_planes(const TriMesh& m) {
  const auto sums = area_weighted_normals(m);
  std::vector<TangentPlane> out(m.size());
  for (std::size_t v = 0; v < m.size(); ++v) {
    const double len = sums[v].norm();
    if (len == 0.0) throw DataError("tangent_plane: vertex " + std::to_string(v) + " has no incident face");
    out[v].normal = sums[v] / len;
    out[v].offset = out[v].normal.dot(m.vertices[v]);
  }
  return out;
}

inline TangentPlane tangent_plane(const TriMesh& m, std::size_t v) {
  if (v >= m.size()) throw InvalidArgument("tangent_plane: vertex out of range");
  Vec3 sum = Vec3::Zero();
  for (const auto& f : m.faces) {
    if (f[0] == v || f[1] == v || f[2] == v) sum += face_normal_area(m, f);
  }
  if (sum.norm() == 0.0) throw DataError("tangent_plane: vertex " + std::to_string(v) + " has no incident face");
  const Vec3 n = sum.normalized();
  return {n, n.dot(m.vertices[v])};
}

// Inscribed-sphere radius at every centerline point, transferred to each
// vertex from its nearest centerline point.
inline std::vector<double> centerline_radii(const TriMesh& m, const Centerline& c) {
  if (c.points.size() < 2) throw DataError("local_radius: centerline needs at least 2 points");
  const TriangleIndex surface(m);
  std::vector<double> radii(c.points.size());
  for (std::size_t i = 0; i < c.points.size(); ++i) {
    const auto hit = surface.closest(c.points[i]);
    const Vec3 fn = face_normal_area(m, m.faces[hit.face]);
    if ((c.points[i] - hit.point).dot(fn) > 1e-9 * fn.norm()) {
      throw DataError("local_radius: centerline point " + std::to_string(i) + " lies outside the mesh");
    }
    radii[i] = std::sqrt(hit.squared_distance);
  }
  return radii;
}

inline std::vector<double> local_radius(const TriMesh& m, const Centerline& c) {
  const auto radii = centerline_radii(m, c);
  const PointIndex line(c.points);
  std::vector<double> out(m.size());
  for (std::size_t v = 0; v < m.size(); ++v) out[v] = radii[line.nearest(m.vertices[v]).index];
  return out;
}

inline std::vector<double> local_radius(const VascularModel& model) {
  return local_radius(model.mesh, model.centerline);
}

// Points of the plane section loop that surrounds `center`. Empty when the
// plane misses the mesh.
inline std::vector<Vec3> section_loop(const TriMesh& m, const Vec3& center, const Vec3& normal) {
  std::vector<double> d(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) d[i] = normal.dot(m.vertices[i] - center);
  auto side = [&](std::uint32_t v) { return d[v] >= 0.0; };

  std::map<std::pair<std::uint32_t, std::uint32_t>, std::size_t> key_id;
  std::vector<Vec3> pts;
  std::vector<std::size_t> parent;
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  auto point_on = [&](std::uint32_t a, std::uint32_t b) {
    const auto key = std::make_pair(std::min(a, b), std::max(a, b));
    auto [it, inserted] = key_id.emplace(key, pts.size());
    if (inserted) {
      const double t = d[key.first] / (d[key.first] - d[key.second]);
      pts.push_back(m.vertices[key.first] + t * (m.vertices[key.second] - m.vertices[key.first]));
      parent.push_back(parent.size());
    }
    return it->second;
  };
  for (const auto& f : m.faces) {
    std::size_t hits[2];
    int count = 0;
    for (int k = 0; k < 3; ++k) {
      const auto a = f[k], b = f[(k + 1) % 3];
      if (side(a) != side(b)) hits[count++] = point_on(a, b);
    }
    if (count == 2) parent[find(hits[0])] = find(hits[1]);
  }
  if (pts.empty()) return {};

  std::map<std::size_t, std::vector<std::size_t>> loops;
  for (std::size_t i = 0; i < pts.size(); ++i) loops[find(i)].push_back(i);
  const std::vector<std::size_t>* best = nullptr;
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto& [root, members] : loops) {
    Vec3 centroid = Vec3::Zero();
    for (auto i : members) centroid += pts[i];
    centroid /= static_cast<double>(members.size());
    const double dc = (centroid - center).squaredNorm();
    if (dc < best_d) best_d = dc, best = &members;
  }
  std::vector<Vec3> out;
  for (auto i : *best) out.push_back(pts[i]);
  return out;
}

inline double max_pairwise_distance(const std::vector<Vec3>& pts) {
  double best = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = i + 1; j < pts.size(); ++j) best = std::max(best, (pts[i] - pts[j]).squaredNorm());
  }
  return std::sqrt(best);
}

struct DiameterProfile {
  std::vector<double> arclength;
  std::vector<double> diameter;
  double max = 0.0;           // over the infrarenal range
  std::size_t skipped = 0;    // samples whose plane missed the mesh
};

inline DiameterProfile max_diameter(const TriMesh& m, const Centerline& c) {
  if (c.points.size() < 2) throw DataError("max_diameter: centerline needs at least 2 points");
  DiameterProfile prof;
  for (std::size_t i = 0; i < c.points.size(); ++i) {
    const auto loop = section_loop(m, c.points[i], c.tangent(i));
    if (loop.empty()) {
      ++prof.skipped;
      continue;
    }
    const double dia = max_pairwise_distance(loop);
    prof.arclength.push_back(c.arclength[i]);
    prof.diameter.push_back(dia);
    if (c.arclength[i] >= c.infrarenal[0] && c.arclength[i] <= c.infrarenal[1]) prof.max = std::max(prof.max, dia);
  }
  return prof;
}

inline DiameterProfile max_diameter(const VascularModel& model) { return max_diameter(model.mesh, model.centerline); }

namespace detail {

struct HalfSpace {
  Vec3 normal;  // kept side: normal . (x - point) >= 0
  Vec3 point;
  double eval(const Vec3& x) const { return normal.dot(x - point); }
};

// Sutherland-Hodgman clip of a convex polygon; appends the section edge
// (exit point -> entry point) created on the plane.
inline std::vector<Vec3> clip(const std::vector<Vec3>& poly, const HalfSpace& h,
                              std::vector<std::pair<Vec3, Vec3>>& cut) {
  std::vector<Vec3> out;
  std::optional<Vec3> exit, entry;
  for (std::size_t k = 0; k < poly.size(); ++k) {
    const Vec3& a = poly[k];
    const Vec3& b = poly[(k + 1) % poly.size()];
    const double da = h.eval(a), db = h.eval(b);
    if (da >= 0.0) out.push_back(a);
    if ((da >= 0.0) != (db >= 0.0)) {
      const Vec3 p = a + (da / (da - db)) * (b - a);
      out.push_back(p);
      (da >= 0.0 ? exit : entry) = p;
    }
  }
  if (exit && entry) cut.emplace_back(*exit, *entry);
  return out;
}

}  // namespace detail

// Volume enclosed between the cross-section planes at the two ends of the
// infrarenal range, by the divergence theorem over the clipped surface and
// the two planar caps.
inline double region_volume(const TriMesh& m, const Centerline& c) {
  const auto [pa, ta] = centerline_frame(c, c.infrarenal[0]);
  const auto [pb, tb] = centerline_frame(c, c.infrarenal[1]);
  const detail::HalfSpace lower{ta, pa}, upper{-tb, pb};

  for (const auto& [a, b] : boundary_edges(m)) {
    const Vec3 &xa = m.vertices[a], &xb = m.vertices[b];
    if ((lower.eval(xa) > 0.0 && upper.eval(xa) > 0.0) || (lower.eval(xb) > 0.0 && upper.eval(xb) > 0.0)) {
      throw DataError("region_volume: open boundary after capping");
    }
  }

  const Vec3 origin = pa;
  double six_vol = 0.0;
  std::vector<std::pair<Vec3, Vec3>> cut_lower, cut_upper;
  for (const auto& f : m.faces) {
    std::vector<Vec3> poly = {m.vertices[f[0]], m.vertices[f[1]], m.vertices[f[2]]};
    poly = detail::clip(poly, lower, cut_lower);
    if (poly.size() < 3) continue;
    poly = detail::clip(poly, upper, cut_upper);
    for (std::size_t k = 1; k + 1 < poly.size(); ++k) {
      six_vol += (poly[0] - origin).dot((poly[k] - origin).cross(poly[k + 1] - origin));
    }
  }
  if (cut_upper.empty() || cut_lower.empty()) throw DataError("region_volume: section planes miss the mesh");
  // The lower cap lies in a plane through the origin and contributes
  // nothing. The upper cap closes the surface boundary loop with the
  // opposite orientation.
  double cap_area = 0.0;
  for (const auto& [s0, s1] : cut_upper) cap_area -= 0.5 * tb.dot((s0 - pb).cross(s1 - pb));
  const double volume = six_vol / 6.0 + tb.dot(pb - origin) * cap_area / 3.0;
  if (!(volume > 0.0)) throw DataError("region_volume: non-positive volume, check face orientation");
  return volume;
}

inline double region_volume(const VascularModel& model) { return region_volume(model.mesh, model.centerline); }

}  // namespace aaa::surface
