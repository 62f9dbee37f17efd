#pragma once

// Rigid centerline registration: arclength-matched initial fit, then
// iterative closest point refinement with Kabsch (Umeyama without scale)
// updates.

#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "aaa/ga/multivector.hpp"
#include "aaa/surface/spatial.hpp"

namespace aaa::surface {

struct IcpResult {
  ga::RigidMotion motion = ga::RigidMotion::identity();
  std::vector<double> rms;  // after the initial fit and after each iteration
  int iterations = 0;
};

namespace detail {

inline Eigen::Matrix3Xd to_matrix(const std::vector<Vec3>& pts) {
  Eigen::Matrix3Xd m(3, static_cast<Eigen::Index>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = pts[i];
  return m;
}

inline void require_full_rank(const std::vector<Vec3>& pts) {
  const Eigen::Matrix3Xd m = to_matrix(pts);
  const Eigen::Matrix3Xd centered = m.colwise() - m.rowwise().mean();
  const Eigen::JacobiSVD<Eigen::Matrix3Xd> svd(centered);
  const auto s = svd.singularValues();
  if (!(s[1] > 1e-9 * std::max(s[0], 1e-300))) throw NumericalError("icp_align: rank-deficient fit");
}

inline ga::RigidMotion kabsch(const std::vector<Vec3>& src, const std::vector<Vec3>& dst) {
  const Eigen::Matrix4d t = Eigen::umeyama(to_matrix(src), to_matrix(dst), false);
  ga::RigidMotion m;
  m.rotation = Eigen::Quaterniond(Eigen::Matrix3d(t.topLeftCorner<3, 3>())).normalized();
  m.translation = t.topRightCorner<3, 1>();
  return m;
}

// n points at equal arclength fractions along the polyline.
inline std::vector<Vec3> resample(const std::vector<Vec3>& pts, std::size_t n) {
  std::vector<double> s(pts.size(), 0.0);
  for (std::size_t i = 1; i < pts.size(); ++i) s[i] = s[i - 1] + (pts[i] - pts[i - 1]).norm();
  std::vector<Vec3> out;
  std::size_t seg = 1;
  for (std::size_t k = 0; k < n; ++k) {
    const double target = s.back() * static_cast<double>(k) / static_cast<double>(n - 1);
    while (seg + 1 < pts.size() && s[seg] < target) ++seg;
    const double span = s[seg] - s[seg - 1];
    const double u = span > 0.0 ? std::clamp((target - s[seg - 1]) / span, 0.0, 1.0) : 0.0;
    out.push_back(pts[seg - 1] + u * (pts[seg] - pts[seg - 1]));
  }
  return out;
}

}  // namespace detail

inline IcpResult icp_align(const std::vector<Vec3>& source, const std::vector<Vec3>& target,
                           double tolerance = 1e-6, int max_iterations = 100) {
  if (source.size() < 3 || target.size() < 3) throw InvalidArgument("icp_align: need at least 3 points each");
  detail::require_full_rank(source);
  detail::require_full_rank(target);

  const std::size_t n = std::max<std::size_t>(std::max(source.size(), target.size()), 16);
  IcpResult r;
  r.motion = detail::kabsch(detail::resample(source, n), detail::resample(target, n));

  const PointIndex index(target);
  auto correspond = [&](const ga::RigidMotion& m, std::vector<Vec3>& moved, std::vector<Vec3>& matched) {
    moved.resize(source.size());
    matched.resize(source.size());
    double sq = 0.0;
    for (std::size_t i = 0; i < source.size(); ++i) {
      moved[i] = m.apply(source[i]);
      const auto hit = index.nearest(moved[i]);
      matched[i] = target[hit.index];
      sq += hit.squared_distance;
    }
    return std::sqrt(sq / static_cast<double>(source.size()));
  };

  std::vector<Vec3> moved, matched;
  double rms = correspond(r.motion, moved, matched);
  r.rms.push_back(rms);
  for (r.iterations = 0; r.iterations < max_iterations; ++r.iterations) {
    const ga::RigidMotion candidate = detail::kabsch(source, matched);
    std::vector<Vec3> moved2, matched2;
    const double next = correspond(candidate, moved2, matched2);
    if (next > rms) break;  // never accept an increase
    const double change = rms - next;
    r.motion = candidate;
    rms = next;
    matched.swap(matched2);
    r.rms.push_back(rms);
    if (change < tolerance) break;
  }
  return r;
}

inline IcpResult icp_align(const Centerline& source, const Centerline& target) {
  return icp_align(source.points, target.points);
}

}  // namespace aaa::surface
