#pragma once

// Farthest point sampling and nearest-coarse-vertex clustering.

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "aaa/surface/spatial.hpp"

namespace aaa::surface {

// Greedy max-min selection of m points starting at `start`. Ties between
// equally distant candidates resolve to the lowest index.
inline std::vector<std::size_t> farthest_point_sample(const std::vector<Vec3>& points, std::size_t m,
                                                      std::size_t start) {
  const std::size_t n = points.size();
  if (n == 0) throw InvalidArgument("farthest_point_sample: empty mesh");
  if (m == 0 || m > n) throw InvalidArgument("farthest_point_sample: sample count out of range");
  if (start >= n) throw InvalidArgument("farthest_point_sample: start index out of range");
  std::vector<std::size_t> picked{start};
  picked.reserve(m);
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::size_t last = start;
  while (picked.size() < m) {
    std::size_t best = n;
    double best_d = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      dist[i] = std::min(dist[i], (points[i] - points[last]).squaredNorm());
      if (dist[i] > best_d) {
        best_d = dist[i];
        best = i;
      }
    }
    picked.push_back(best);
    last = best;
  }
  return picked;
}

inline std::size_t sample_count(std::size_t n, double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw InvalidArgument("sampling ratio must lie in (0, 1]");
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n))));
}

// Ratio form; the first index is drawn from `seed`.
inline std::vector<std::size_t> farthest_point_sample(const TriMesh& mesh, double ratio, std::uint64_t seed) {
  if (mesh.empty()) throw InvalidArgument("farthest_point_sample: empty mesh");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, mesh.size() - 1);
  return farthest_point_sample(mesh.vertices, sample_count(mesh.size(), ratio), pick(rng));
}

struct Clustering {
  std::vector<std::size_t> assignment;           // fine vertex -> cluster (position in coarse list)
  std::vector<std::vector<std::size_t>> members;  // cluster -> fine vertices
};

inline Clustering cluster_assign(const std::vector<Vec3>& points, const std::vector<std::size_t>& coarse) {
  if (coarse.empty()) throw InvalidArgument("cluster_assign: no coarse vertices");
  // Index over coarse positions ordered by vertex index so that the
  // lowest-index tie rule of PointIndex matches lowest vertex index.
  std::vector<std::size_t> order(coarse.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return coarse[a] < coarse[b]; });
  std::vector<Vec3> pos;
  pos.reserve(coarse.size());
  for (auto k : order) pos.push_back(points.at(coarse[k]));
  const PointIndex index(std::move(pos));

  Clustering c;
  c.assignment.resize(points.size());
  c.members.resize(coarse.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const std::size_t k = order[index.nearest(points[i]).index];
    c.assignment[i] = k;
    c.members[k].push_back(i);
  }
  return c;
}

}  // namespace aaa::surface
