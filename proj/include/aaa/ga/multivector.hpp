#pragma once

// Projective geometric algebra G(3,0,1).
//
// Storage order of the 16 components:
//
//   0      scalar
//   1-4    e0, e1, e2, e3
//   5-10   e01, e02, e03, e12, e13, e23
//   11-14  trivectors t1, t2, t3, e123
//   15     e0123
//
// e0 is the degenerate direction (e0^2 = 0); e1, e2, e3 square to +1.
// The three ideal trivector slots hold the blades dual to e1, e2, e3:
// t1 = e023, t2 = e031 (= -e013), t3 = e012. With this orientation a point
// (x, y, z) is stored literally as (x, y, z, 1) in slots 11-14, a plane
// {p : <n, p> = d} as (d, n) in slots 1-4 and the translator for a shift
// by v as (1, v / 2) in slots 0, 5-7, and all three transform consistently
// under the sandwich action.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <string>

#include "aaa/error.hpp"

namespace aaa::ga {

inline constexpr int kComponents = 16;

namespace slot {
inline constexpr int kScalar = 0;
inline constexpr int kE0 = 1;
inline constexpr int kE1 = 2;
inline constexpr int kE2 = 3;
inline constexpr int kE3 = 4;
inline constexpr int kE01 = 5;
inline constexpr int kE02 = 6;
inline constexpr int kE03 = 7;
inline constexpr int kE12 = 8;
inline constexpr int kE13 = 9;
inline constexpr int kE23 = 10;
inline constexpr int kT1 = 11;
inline constexpr int kT2 = 12;
inline constexpr int kT3 = 13;
inline constexpr int kE123 = 14;
inline constexpr int kE0123 = 15;
}  // namespace slot

namespace detail {

// Generator bitmask of each storage slot (bit 0 = e0, bit k = ek) and the
// sign relating the slot to the canonically ordered blade.
inline constexpr std::array<std::uint8_t, kComponents> kSlotMask = {
    0b0000, 0b0001, 0b0010, 0b0100, 0b1000, 0b0011, 0b0101, 0b1001,
    0b0110, 0b1010, 0b1100, 0b1101, 0b1011, 0b0111, 0b1110, 0b1111};
inline constexpr std::array<int, kComponents> kSlotSign = {
    1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, -1, 1, 1, 1};

constexpr int reorder_sign(unsigned a, unsigned b) {
  int swaps = 0;
  a >>= 1;
  while (a != 0) {
    swaps += std::popcount(a & b);
    a >>= 1;
  }
  return (swaps & 1) ? -1 : 1;
}

struct ProductEntry {
  int slot = 0;
  int sign = 0;  // 0 marks a vanishing product
};

constexpr int slot_of_mask(unsigned mask) {
  for (int s = 0; s < kComponents; ++s) {
    if (kSlotMask[s] == mask) return s;
  }
  return -1;
}

constexpr std::array<std::array<ProductEntry, kComponents>, kComponents> make_cayley() {
  std::array<std::array<ProductEntry, kComponents>, kComponents> table{};
  for (int i = 0; i < kComponents; ++i) {
    for (int j = 0; j < kComponents; ++j) {
      const unsigned a = kSlotMask[i];
      const unsigned b = kSlotMask[j];
      if ((a & b & 1u) != 0) continue;  // e0 e0 = 0
      const int k = slot_of_mask(a ^ b);
      table[i][j] = {k, kSlotSign[i] * kSlotSign[j] * reorder_sign(a, b) * kSlotSign[k]};
    }
  }
  return table;
}

constexpr std::array<int, kComponents> make_grades() {
  std::array<int, kComponents> g{};
  for (int s = 0; s < kComponents; ++s) g[s] = std::popcount(static_cast<unsigned>(kSlotMask[s]));
  return g;
}

}  // namespace detail

inline constexpr auto kCayley = detail::make_cayley();
inline constexpr auto kGrade = detail::make_grades();

constexpr bool has_e0(int s) { return (detail::kSlotMask[s] & 1u) != 0; }

inline const char* slot_name(int s) {
  static constexpr std::array<const char*, kComponents> names = {
      "1",   "e0",  "e1",  "e2",   "e3",   "e01",  "e02",  "e03",
      "e12", "e13", "e23", "e023", "e031", "e012", "e123", "e0123"};
  return names.at(static_cast<std::size_t>(s));
}

struct Multivector {
  std::array<double, kComponents> c{};

  double& operator[](int i) { return c[static_cast<std::size_t>(i)]; }
  double operator[](int i) const { return c[static_cast<std::size_t>(i)]; }

  Multivector& operator+=(const Multivector& o) {
    for (int i = 0; i < kComponents; ++i) c[i] += o.c[i];
    return *this;
  }
  Multivector& operator-=(const Multivector& o) {
    for (int i = 0; i < kComponents; ++i) c[i] -= o.c[i];
    return *this;
  }
  Multivector& operator*=(double s) {
    for (auto& v : c) v *= s;
    return *this;
  }
  friend Multivector operator+(Multivector a, const Multivector& b) { return a += b; }
  friend Multivector operator-(Multivector a, const Multivector& b) { return a -= b; }
  friend Multivector operator*(Multivector a, double s) { return a *= s; }
  friend Multivector operator*(double s, Multivector a) { return a *= s; }
  friend bool operator==(const Multivector&, const Multivector&) = default;

  static Multivector scalar(double s) {
    Multivector m;
    m.c[0] = s;
    return m;
  }
  static Multivector blade(int s, double value = 1.0) {
    Multivector m;
    m.c[static_cast<std::size_t>(s)] = value;
    return m;
  }
};

inline Multivector geometric_product(const Multivector& a, const Multivector& b) {
  Multivector r;
  for (int i = 0; i < kComponents; ++i) {
    if (a.c[i] == 0.0) continue;
    for (int j = 0; j < kComponents; ++j) {
      const auto& e = kCayley[i][j];
      if (e.sign != 0) r.c[e.slot] += e.sign * a.c[i] * b.c[j];
    }
  }
  return r;
}

inline Multivector operator*(const Multivector& a, const Multivector& b) {
  return geometric_product(a, b);
}

inline Multivector reverse(const Multivector& a) {
  Multivector r = a;
  for (int s = 0; s < kComponents; ++s) {
    if (kGrade[s] == 2 || kGrade[s] == 3) r.c[s] = -r.c[s];
  }
  return r;
}

inline Multivector grade_part(const Multivector& a, int grade) {
  Multivector r;
  for (int s = 0; s < kComponents; ++s) {
    if (kGrade[s] == grade) r.c[s] = a.c[s];
  }
  return r;
}

// Euclidean inner product over the blades without e0. Invariant under rigid
// motions; e0 components have zero norm under the degenerate metric.
inline double invariant_inner(const Multivector& a, const Multivector& b) {
  double s = 0.0;
  for (int i = 0; i < kComponents; ++i) {
    if (!has_e0(i)) s += a.c[i] * b.c[i];
  }
  return s;
}

// ---------------------------------------------------------------------------
// Embeddings of geometric objects

inline Multivector embed_scalar(double s) { return Multivector::scalar(s); }

// Oriented plane {p : <normal, p> = offset}. The normal is normalised and the
// offset rescaled by the same factor, so the embedded plane is unchanged.
inline Multivector embed_plane(const Eigen::Vector3d& normal, double offset) {
  const double len = normal.norm();
  if (!(len > 1e-12) || !std::isfinite(len)) throw InvalidArgument("degenerate plane");
  Multivector m;
  m.c[slot::kE0] = offset / len;
  m.c[slot::kE1] = normal.x() / len;
  m.c[slot::kE2] = normal.y() / len;
  m.c[slot::kE3] = normal.z() / len;
  return m;
}

inline Multivector embed_point(const Eigen::Vector3d& p) {
  Multivector m;
  m.c[slot::kT1] = p.x();
  m.c[slot::kT2] = p.y();
  m.c[slot::kT3] = p.z();
  m.c[slot::kE123] = 1.0;
  return m;
}

inline Multivector embed_translation(const Eigen::Vector3d& t) {
  Multivector m;
  m.c[slot::kScalar] = 1.0;
  m.c[slot::kE01] = 0.5 * t.x();
  m.c[slot::kE02] = 0.5 * t.y();
  m.c[slot::kE03] = 0.5 * t.z();
  return m;
}

inline Eigen::Vector3d extract_point(const Multivector& m) {
  const double w = m.c[slot::kE123];
  if (std::abs(w) < 1e-12) throw NumericalError("point at infinity");
  return Eigen::Vector3d(m.c[slot::kT1], m.c[slot::kT2], m.c[slot::kT3]) / w;
}

// Plane normal and offset of a grade-1 multivector (unnormalised).
inline std::pair<Eigen::Vector3d, double> extract_plane(const Multivector& m) {
  return {Eigen::Vector3d(m.c[slot::kE1], m.c[slot::kE2], m.c[slot::kE3]), m.c[slot::kE0]};
}

// ---------------------------------------------------------------------------
// Rigid motions p -> R p + t

struct RigidMotion {
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static RigidMotion identity() { return {}; }

  static RigidMotion from_axis_angle(const Eigen::Vector3d& axis, double angle,
                                     const Eigen::Vector3d& t = Eigen::Vector3d::Zero()) {
    RigidMotion m;
    m.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(angle, axis.normalized()));
    m.translation = t;
    return m;
  }

  Eigen::Matrix3d matrix() const { return rotation.toRotationMatrix(); }

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation * p + translation; }
  Eigen::Vector3d apply_vector(const Eigen::Vector3d& v) const { return rotation * v; }

  // (*this) after `other`.
  RigidMotion compose(const RigidMotion& other) const {
    RigidMotion r;
    r.rotation = (rotation * other.rotation).normalized();
    r.translation = rotation * other.translation + translation;
    return r;
  }

  RigidMotion inverse() const {
    RigidMotion r;
    r.rotation = rotation.conjugate();
    r.translation = -(r.rotation * translation);
    return r;
  }

  // Even versor T * R implementing the motion by sandwiching.
  Multivector versor() const {
    const Eigen::Quaterniond q = rotation.normalized();
    Multivector rot;
    rot.c[slot::kScalar] = q.w();
    rot.c[slot::kE23] = -q.x();
    rot.c[slot::kE13] = q.y();
    rot.c[slot::kE12] = -q.z();
    return embed_translation(translation) * rot;
  }
};

inline Multivector apply_motion(const RigidMotion& m, const Multivector& x) {
  const Multivector v = m.versor();
  return v * x * reverse(v);
}

}  // namespace aaa::ga
