#pragma once

// Nearest-point and point-to-triangle queries on top of Eigen's KdBVH.

#include <unsupported/Eigen/BVH>
#include <limits>
#include <vector>

#include "aaa/surface/mesh.hpp"

namespace aaa::surface {

using Box3 = Eigen::AlignedBox3d;

// Closest point to p on triangle (a, b, c), by Voronoi-region case analysis.
inline Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  }
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

// Exact nearest neighbour over a fixed point set. Ties go to the lowest index.
class PointIndex {
 public:
  PointIndex() = default;
  explicit PointIndex(std::vector<Vec3> points) : points_(std::move(points)) {
    if (points_.empty()) throw InvalidArgument("point index: empty point set");
    std::vector<int> ids(points_.size());
    std::vector<Box3> boxes(points_.size());
    for (std::size_t i = 0; i < points_.size(); ++i) {
      ids[i] = static_cast<int>(i);
      boxes[i] = Box3(points_[i], points_[i]);
    }
    tree_.init(ids.begin(), ids.end(), boxes.begin(), boxes.end());
  }

  struct Hit {
    std::size_t index = 0;
    double squared_distance = std::numeric_limits<double>::infinity();
  };

  Hit nearest(const Vec3& q) const {
    Minimizer m{this, q, {}};
    Eigen::BVMinimize(tree_, m);
    return m.best;
  }

  const std::vector<Vec3>& points() const { return points_; }
  std::size_t size() const { return points_.size(); }

 private:
  struct Minimizer {
    using Scalar = double;
    const PointIndex* self;
    Vec3 q;
    Hit best;
    // Slightly shrunk so boxes at exactly the current best distance are
    // still visited and can supply a lower-index tie.
    double minimumOnVolume(const Box3& b) const { return b.squaredExteriorDistance(q) * (1.0 - 1e-12); }
    double minimumOnObject(int i) {
      const double d = (self->points_[static_cast<std::size_t>(i)] - q).squaredNorm();
      const auto idx = static_cast<std::size_t>(i);
      if (d < best.squared_distance || (d == best.squared_distance && idx < best.index)) best = {idx, d};
      return d;
    }
  };

  std::vector<Vec3> points_;
  Eigen::KdBVH<double, 3, int> tree_;
};

// Closest point on a triangle soup.
class TriangleIndex {
 public:
  explicit TriangleIndex(const TriMesh& mesh) : mesh_(&mesh) {
    if (mesh.faces.empty()) throw InvalidArgument("triangle index: mesh has no faces");
    std::vector<int> ids(mesh.faces.size());
    std::vector<Box3> boxes(mesh.faces.size());
    for (std::size_t i = 0; i < mesh.faces.size(); ++i) {
      ids[i] = static_cast<int>(i);
      Box3 b;
      for (auto v : mesh.faces[i]) b.extend(mesh.vertices[v]);
      boxes[i] = b;
    }
    tree_.init(ids.begin(), ids.end(), boxes.begin(), boxes.end());
  }

  struct Hit {
    std::size_t face = 0;
    Vec3 point = Vec3::Zero();
    double squared_distance = std::numeric_limits<double>::infinity();
  };

  Hit closest(const Vec3& q) const {
    Minimizer m{mesh_, q, {}};
    Eigen::BVMinimize(tree_, m);
    return m.best;
  }

 private:
  struct Minimizer {
    using Scalar = double;
    const TriMesh* mesh;
    Vec3 q;
    Hit best;
    double minimumOnVolume(const Box3& b) const { return b.squaredExteriorDistance(q); }
    double minimumOnObject(int i) {
      const auto& f = mesh->faces[static_cast<std::size_t>(i)];
      const Vec3 p = closest_point_on_triangle(q, mesh->vertices[f[0]], mesh->vertices[f[1]], mesh->vertices[f[2]]);
      const double d = (p - q).squaredNorm();
      if (d < best.squared_distance) best = {static_cast<std::size_t>(i), p, d};
      return d;
    }
  };

  const TriMesh* mesh_;
  Eigen::KdBVH<double, 3, int> tree_;
};

}  // namespace aaa::surface
