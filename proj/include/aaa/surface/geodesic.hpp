#pragma once

// Heat-method geodesic distance: diffuse heat from the sources for a short
// time t = h^2 (h = mean edge length), normalise the negative gradient,
// recover the distance by a Poisson solve. Boundaries are treated with
// natural (Neumann) conditions in both solves.

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <numeric>
#include <queue>
#include <sstream>

#include "aaa/surface/mesh.hpp"

namespace aaa::surface {

namespace detail {

inline double cot(const Vec3& a, const Vec3& b) {
  const double s = a.cross(b).norm();
  return s > 0.0 ? a.dot(b) / s : 0.0;
}

// Positive semidefinite cotangent Laplacian and lumped mass.
inline void cotan_laplacian(const TriMesh& m, Eigen::SparseMatrix<double>& L, Eigen::VectorXd& mass) {
  const auto n = static_cast<Eigen::Index>(m.size());
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(m.faces.size() * 12);
  mass = Eigen::VectorXd::Zero(n);
  for (const auto& f : m.faces) {
    for (int k = 0; k < 3; ++k) {
      const auto i = f[k], j = f[(k + 1) % 3], o = f[(k + 2) % 3];
      const double w = 0.5 * cot(m.vertices[i] - m.vertices[o], m.vertices[j] - m.vertices[o]);
      trip.emplace_back(i, j, -w);
      trip.emplace_back(j, i, -w);
      trip.emplace_back(i, i, w);
      trip.emplace_back(j, j, w);
    }
    const double area = 0.5 * face_normal_area(m, f).norm();
    for (auto v : f) mass[v] += area / 3.0;
  }
  L.resize(n, n);
  L.setFromTriplets(trip.begin(), trip.end());
}

inline std::vector<std::size_t> unreachable(const TriMesh& m, const std::vector<std::size_t>& sources) {
  std::vector<std::vector<std::uint32_t>> adj(m.size());
  for (const auto& f : m.faces) {
    for (int k = 0; k < 3; ++k) adj[f[k]].push_back(f[(k + 1) % 3]), adj[f[(k + 1) % 3]].push_back(f[k]);
  }
  std::vector<char> seen(m.size(), 0);
  std::queue<std::size_t> q;
  for (auto s : sources) seen[s] = 1, q.push(s);
  while (!q.empty()) {
    const auto v = q.front();
    q.pop();
    for (auto w : adj[v]) {
      if (!seen[w]) seen[w] = 1, q.push(w);
    }
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!seen[i]) out.push_back(i);
  }
  return out;
}

// Solves A x = b with rows/cols in `fixed` held at zero.
inline Eigen::VectorXd solve_with_zeros(const Eigen::SparseMatrix<double>& A, const Eigen::VectorXd& b,
                                        const std::vector<char>& fixed) {
  const auto n = A.rows();
  std::vector<Eigen::Index> map(static_cast<std::size_t>(n), -1);
  Eigen::Index free = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!fixed[static_cast<std::size_t>(i)]) map[static_cast<std::size_t>(i)] = free++;
  }
  std::vector<Eigen::Triplet<double>> trip;
  for (Eigen::Index k = 0; k < A.outerSize(); ++k) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(A, k); it; ++it) {
      const auto r = map[static_cast<std::size_t>(it.row())], c = map[static_cast<std::size_t>(it.col())];
      if (r >= 0 && c >= 0) trip.emplace_back(r, c, it.value());
    }
  }
  Eigen::SparseMatrix<double> R(free, free);
  R.setFromTriplets(trip.begin(), trip.end());
  Eigen::VectorXd rb(free);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (map[static_cast<std::size_t>(i)] >= 0) rb[map[static_cast<std::size_t>(i)]] = b[i];
  }
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(R);
  if (solver.info() != Eigen::Success) throw NumericalError("heat_geodesic: factorisation failed");
  const Eigen::VectorXd rx = solver.solve(rb);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (map[static_cast<std::size_t>(i)] >= 0) x[i] = rx[map[static_cast<std::size_t>(i)]];
  }
  return x;
}

}  // namespace detail

inline std::vector<double> heat_geodesic(const TriMesh& m, const std::vector<std::size_t>& sources) {
  if (sources.empty()) throw InvalidArgument("heat_geodesic: no source vertices");
  for (auto s : sources) {
    if (s >= m.size()) throw InvalidArgument("heat_geodesic: source index out of range");
  }
  if (const auto orphans = detail::unreachable(m, sources); !orphans.empty()) {
    std::ostringstream msg;
    msg << "heat_geodesic: " << orphans.size() << " vertices unreachable from sources:";
    for (std::size_t k = 0; k < std::min<std::size_t>(orphans.size(), 20); ++k) msg << ' ' << orphans[k];
    if (orphans.size() > 20) msg << " ...";
    throw DataError(msg.str());
  }

  Eigen::SparseMatrix<double> L;
  Eigen::VectorXd mass;
  detail::cotan_laplacian(m, L, mass);
  const double h = mean_edge_length(m);
  const double t = h * h;
  Eigen::SparseMatrix<double> A = L * t;
  for (Eigen::Index i = 0; i < A.rows(); ++i) A.coeffRef(i, i) += mass[i];

  const auto n = static_cast<Eigen::Index>(m.size());
  Eigen::VectorXd delta = Eigen::VectorXd::Zero(n);
  std::vector<char> is_source(m.size(), 0);
  for (auto s : sources) delta[static_cast<Eigen::Index>(s)] = mass[static_cast<Eigen::Index>(s)], is_source[s] = 1;

  const Eigen::VectorXd u = detail::solve_with_zeros(A, delta, std::vector<char>(m.size(), 0));

  // Normalised negative gradient per face and its integrated divergence.
  Eigen::VectorXd div = Eigen::VectorXd::Zero(n);
  for (const auto& f : m.faces) {
    const Vec3 nrm2 = face_normal_area(m, f);
    const double area2 = nrm2.norm();
    if (area2 == 0.0) continue;
    const Vec3 nrm = nrm2 / area2;
    Vec3 grad = Vec3::Zero();
    for (int k = 0; k < 3; ++k) {
      const Vec3 e = m.vertices[f[(k + 2) % 3]] - m.vertices[f[(k + 1) % 3]];
      grad += u[f[k]] * nrm.cross(e);
    }
    grad /= area2;
    const double gn = grad.norm();
    if (gn == 0.0) continue;
    const Vec3 X = -grad / gn;
    for (int k = 0; k < 3; ++k) {
      const auto i = f[k], j = f[(k + 1) % 3], o = f[(k + 2) % 3];
      const Vec3 e1 = m.vertices[j] - m.vertices[i];
      const Vec3 e2 = m.vertices[o] - m.vertices[i];
      const double cot2 = detail::cot(m.vertices[i] - m.vertices[o], m.vertices[j] - m.vertices[o]);
      const double cot1 = detail::cot(m.vertices[i] - m.vertices[j], m.vertices[o] - m.vertices[j]);
      div[i] += 0.5 * (cot2 * e1.dot(X) + cot1 * e2.dot(X));
    }
  }

  // Sources are held at zero; elsewhere the natural boundary condition.
  const Eigen::VectorXd phi = detail::solve_with_zeros(L, -div, is_source);
  std::vector<double> out(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = std::max(0.0, phi[static_cast<Eigen::Index>(i)]);
  return out;
}

}  // namespace aaa::surface
