#pragma once

// Point-set distances and growth metrics.

#include <algorithm>
#include <optional>
#include <vector>

#include "aaa/surface/spatial.hpp"

namespace aaa::surface {

// Distance from every point of `from` to its nearest neighbour in `to`.
inline std::vector<double> directed_distances(const std::vector<Vec3>& from, const PointIndex& to) {
  std::vector<double> d(from.size());
  for (std::size_t i = 0; i < from.size(); ++i) d[i] = std::sqrt(to.nearest(from[i]).squared_distance);
  return d;
}

inline std::vector<double> directed_distances(const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
  if (from.empty() || to.empty()) throw InvalidArgument("point distance: empty point set");
  return directed_distances(from, PointIndex(to));
}

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double chamfer(const std::vector<Vec3>& p, const std::vector<Vec3>& q) {
  if (p.empty() || q.empty()) throw InvalidArgument("chamfer: empty point set");
  return mean(directed_distances(p, q)) + mean(directed_distances(q, p));
}

// Percentile with linear interpolation between order statistics
// (position (n - 1) * pct / 100).
inline double percentile(std::vector<double> v, double pct) {
  if (v.empty()) throw InvalidArgument("percentile: empty sample");
  std::sort(v.begin(), v.end());
  const double pos = (static_cast<double>(v.size()) - 1.0) * pct / 100.0;
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline double hd95(const std::vector<Vec3>& p, const std::vector<Vec3>& q) {
  if (p.empty() || q.empty()) throw InvalidArgument("hd95: empty point set");
  return std::max(percentile(directed_distances(p, q), 95.0), percentile(directed_distances(q, p), 95.0));
}

inline double median(const std::vector<double>& v) { return percentile(v, 50.0); }

// Relative growth volume difference; undefined (nullopt) for zero
// reference growth.
inline std::optional<double> rgvd(double pred_growth, double ref_growth) {
  if (ref_growth == 0.0) return std::nullopt;
  return (pred_growth - ref_growth) / ref_growth;
}

inline double arc_length(const std::vector<Vec3>& trajectory) {
  if (trajectory.size() < 2) throw InvalidArgument("arc_length: need at least 2 points");
  double s = 0.0;
  for (std::size_t k = 1; k < trajectory.size(); ++k) s += (trajectory[k] - trajectory[k - 1]).norm();
  return s;
}

}  // namespace aaa::surface
