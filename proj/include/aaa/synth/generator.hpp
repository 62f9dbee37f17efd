#pragma once

// Synthetic longitudinal aneurysms: a tube around a straight or planar-arc
// centerline with outer-wall radius
//
//   R(s, t) = base + a(t) exp(-(s - s0)^2 / (2 w^2))
//
// and closed-form surrogate feature fields. Everything is a deterministic
// function of the spec.

#include <cmath>
#include <functional>
#include <nlohmann/json.hpp>
#include <random>

#include "aaa/surface/mesh.hpp"
#include "aaa/temporal/timeline.hpp"

namespace aaa::synth {

using surface::Vec3;

struct Amplitude {
  enum class Kind { linear, logistic };
  Kind kind = Kind::linear;
  double a0 = 5.0;     // linear: amplitude at t = 0 (mm)
  double rate = 1.0;   // linear: mm / year
  double a_max = 20.0; // logistic: a_max / (1 + exp(-k (t - t_mid)))
  double k = 1.0;
  double t_mid = 3.0;

  double at(double t) const {
    if (kind == Kind::linear) return a0 + rate * t;
    return a_max / (1.0 + std::exp(-k * (t - t_mid)));
  }
};

struct PatientSpec {
  std::string id = "P000";
  std::uint64_t seed = 0;
  double base_radius = 10.0;    // mm
  double bulge_center = 60.0;   // arclength, mm
  double bulge_width = 15.0;    // mm
  Amplitude amplitude;
  double length = 120.0;        // mm
  std::vector<double> times = {-1.0, 0.0, 1.0, 2.0};
  double noise = 0.05;          // mm, per-vertex Gaussian
  double edge_length = 4.0;     // target mesh edge length, mm
  double curvature_radius = 0.0;  // 0: straight centerline
  double thickness_ratio = 0.5;   // ILT thickness per mm of bulge height

  void validate() const {
    if (times.size() < 3) throw InvalidArgument(id + ": at least three snapshot times required");
    for (std::size_t i = 1; i < times.size(); ++i) {
      if (!(times[i] > times[i - 1])) throw InvalidArgument(id + ": times must be strictly increasing");
    }
    if (!(edge_length > 0.0) || !(length > 4.0 * edge_length)) throw InvalidArgument(id + ": bad resolution/length");
    if (!(base_radius > 0.0) || !(bulge_width > 0.0) || noise < 0.0) throw InvalidArgument(id + ": bad geometry");
    if (amplitude.kind == Amplitude::Kind::linear ? amplitude.rate < 0.0 : (amplitude.k < 0.0 || amplitude.a_max < 0.0)) {
      throw InvalidArgument(id + ": amplitude schedule must be non-decreasing");
    }
    for (double t : times) {
      if (amplitude.at(t) < 0.0) throw InvalidArgument(id + ": negative amplitude");
    }
    const double r_max = base_radius + amplitude.at(times.back());
    if (curvature_radius > 0.0 && r_max >= curvature_radius) throw InvalidArgument(id + ": self-intersecting spec");
  }
};

// Parametrisation shared by all snapshots of a patient.
class TubeGeometry {
 public:
  explicit TubeGeometry(const PatientSpec& spec) : spec_(spec) {
    spec.validate();
    rings_ = static_cast<std::size_t>(std::llround(spec.length / spec.edge_length)) + 1;
    const double r_mid = spec.base_radius + 0.5 * spec.amplitude.at(spec.times.back());
    segments_ = std::max<std::size_t>(12, static_cast<std::size_t>(std::llround(2.0 * M_PI * r_mid / spec.edge_length)));
  }

  std::size_t rings() const { return rings_; }
  std::size_t segments() const { return segments_; }
  double ring_s(std::size_t i) const { return spec_.length * static_cast<double>(i) / static_cast<double>(rings_ - 1); }

  double bump(double s) const {
    const double z = (s - spec_.bulge_center) / spec_.bulge_width;
    return std::exp(-0.5 * z * z);
  }
  double radius(double s, double t) const { return spec_.base_radius + spec_.amplitude.at(t) * bump(s); }
  double thickness(double s, double t) const { return 0.3 + spec_.thickness_ratio * spec_.amplitude.at(t) * bump(s); }

  // Centerline point and orthonormal frame (tangent, normal, binormal).
  Vec3 center(double s) const {
    if (spec_.curvature_radius <= 0.0) return Vec3(0, 0, s);
    const double rc = spec_.curvature_radius, phi = s / rc;
    return Vec3(rc * (1.0 - std::cos(phi)), 0.0, rc * std::sin(phi));
  }
  Vec3 tangent(double s) const {
    if (spec_.curvature_radius <= 0.0) return Vec3(0, 0, 1);
    const double phi = s / spec_.curvature_radius;
    return Vec3(std::sin(phi), 0.0, std::cos(phi));
  }
  Vec3 normal(double s) const {
    if (spec_.curvature_radius <= 0.0) return Vec3(1, 0, 0);
    const double phi = s / spec_.curvature_radius;
    return Vec3(std::cos(phi), 0.0, -std::sin(phi));
  }
  static Vec3 binormal() { return Vec3(0, 1, 0); }

  Vec3 radial(double s, double theta) const { return std::cos(theta) * normal(s) + std::sin(theta) * binormal(); }
  Vec3 surface_point(double s, double theta, double r) const { return center(s) + r * radial(s, theta); }

  // Length of the theta = const line on the outer wall from the inlet to
  // every ring, by 0.25 mm polyline quadrature.
  std::vector<double> meridian_lengths(double theta, double t) const {
    std::vector<double> out(rings_, 0.0);
    double total = 0.0;
    Vec3 prev = surface_point(0.0, theta, radius(0.0, t));
    for (std::size_t i = 1; i < rings_; ++i) {
      const double a = ring_s(i - 1), b = ring_s(i);
      const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil((b - a) / 0.25)));
      for (std::size_t k = 1; k <= n; ++k) {
        const double sk = a + (b - a) * static_cast<double>(k) / static_cast<double>(n);
        const Vec3 p = surface_point(sk, theta, radius(sk, t));
        total += (p - prev).norm();
        prev = p;
      }
      out[i] = total;
    }
    return out;
  }

 private:
  PatientSpec spec_;
  std::size_t rings_ = 0;
  std::size_t segments_ = 0;
};

struct Snapshot {
  surface::VascularModel model;
  std::vector<double> s, theta;  // noiseless surface coordinates per vertex
};

inline std::pair<double, double> infrarenal_range(const PatientSpec& spec) {
  return {std::max(0.15 * spec.length, spec.bulge_center - 2.2 * spec.bulge_width),
          std::min(0.85 * spec.length, spec.bulge_center + 2.2 * spec.bulge_width)};
}

inline surface::Region region_at(const PatientSpec& spec, double s, double theta) {
  const auto [lo, hi] = infrarenal_range(spec);
  if (s < 0.06 * spec.length) return surface::Region::inlet;
  if (s > 0.92 * spec.length) return surface::Region::iliac;
  if (s >= lo && s <= hi) return surface::Region::infrarenal;
  const double wrapped = std::remainder(theta, 2.0 * M_PI);
  if (s >= lo - 8.0 && s < lo && std::abs(wrapped) < 0.4) return surface::Region::renal;
  return surface::Region::aorta;
}

namespace detail {

inline surface::TriMesh tube_mesh(const TubeGeometry& g, const std::vector<double>& s, const std::vector<double>& theta,
                                  const std::function<double(double)>& r_of_s) {
  surface::TriMesh m;
  for (std::size_t i = 0; i < s.size(); ++i) m.vertices.push_back(g.surface_point(s[i], theta[i], r_of_s(s[i])));
  const auto segs = static_cast<std::uint32_t>(g.segments());
  for (std::uint32_t i = 0; i + 1 < g.rings(); ++i) {
    for (std::uint32_t j = 0; j < segs; ++j) {
      const std::uint32_t a = i * segs + j, b = i * segs + (j + 1) % segs;
      const std::uint32_t c = a + segs, d = b + segs;
      m.faces.push_back({a, b, d});
      m.faces.push_back({a, d, c});
    }
  }
  return m;
}

inline std::mt19937_64 snapshot_rng(std::uint64_t seed, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), 0x5e7u};
  return std::mt19937_64(seq);
}

}  // namespace detail

// Snapshot `index` of the patient (time spec.times[index]).
inline Snapshot generate_snapshot(const PatientSpec& spec, std::size_t index) {
  const TubeGeometry g(spec);
  const double t = spec.times.at(index);
  auto rng = detail::snapshot_rng(spec.seed, index);
  std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * M_PI / static_cast<double>(g.segments()));
  const double phase = phase_dist(rng);
  std::normal_distribution<double> noise(0.0, 1.0);

  Snapshot snap;
  for (std::size_t i = 0; i < g.rings(); ++i) {
    for (std::size_t j = 0; j < g.segments(); ++j) {
      snap.s.push_back(g.ring_s(i));
      snap.theta.push_back(phase + 2.0 * M_PI * static_cast<double>(j) / static_cast<double>(g.segments()));
    }
  }
  auto& model = snap.model;
  model.time = t;
  model.mesh = detail::tube_mesh(g, snap.s, snap.theta, [&](double s) { return g.radius(s, t); });
  if (spec.noise > 0.0) {
    for (auto& v : model.mesh.vertices) v += spec.noise * Vec3(noise(rng), noise(rng), noise(rng));
  }
  surface::compute_vertex_normals(model.mesh);
  surface::TriMesh lumen =
      detail::tube_mesh(g, snap.s, snap.theta, [&](double s) { return g.radius(s, t) - g.thickness(s, t); });
  surface::compute_vertex_normals(lumen);
  model.lumen = std::move(lumen);

  const std::size_t n = model.mesh.size();
  for (std::size_t v = 0; v < n; ++v) model.mesh.regions.push_back(region_at(spec, snap.s[v], snap.theta[v]));

  std::vector<surface::Vec3> cl;
  const auto count = static_cast<std::size_t>(std::ceil(spec.length)) + 1;
  for (std::size_t k = 0; k < count; ++k) cl.push_back(g.center(spec.length * static_cast<double>(k) / double(count - 1)));
  const auto [lo, hi] = infrarenal_range(spec);
  model.centerline = surface::make_centerline(std::move(cl), {lo, hi});

  auto& f = model.features;
  for (const char* name : {"thickness", "radius", "geo_inlet", "geo_outlet", "tawss", "osi"}) f[name].resize(n);
  const bool hist = t - temporal::kLookback >= spec.times.front() - temporal::kTimeTolerance;
  if (hist) f["hist_growth"].resize(n);
  std::vector<std::vector<double>> meridian(g.segments());
  for (std::size_t j = 0; j < g.segments(); ++j) meridian[j] = g.meridian_lengths(snap.theta[j], t);
  for (std::size_t v = 0; v < n; ++v) {
    const double s = snap.s[v];
    const auto& column = meridian[v % g.segments()];
    const double r = g.radius(s, t);
    const double h = spec.amplitude.at(t) * g.bump(s);
    f["thickness"][v] = g.thickness(s, t);
    f["radius"][v] = r;
    f["geo_inlet"][v] = column[v / g.segments()];
    f["geo_outlet"][v] = column.back() - column[v / g.segments()];
    f["tawss"][v] = (spec.base_radius / r) * (spec.base_radius / r);
    f["osi"][v] = 0.5 * h / (h + 1.0);
    if (hist) f["hist_growth"][v] = r - g.radius(s, t - temporal::kLookback);
  }
  return snap;
}

inline temporal::PatientTimeline generate_patient(const PatientSpec& spec) {
  spec.validate();
  temporal::PatientTimeline tl;
  tl.id = spec.id;
  for (std::size_t j = 0; j < spec.times.size(); ++j) tl.models.push_back(generate_snapshot(spec, j).model);
  return tl;
}

// Exact displacement of the noiseless surface points of snapshot `index`
// from its time t to t + dt.
inline std::vector<Vec3> analytic_deformation(const PatientSpec& spec, std::size_t index, double dt) {
  const TubeGeometry g(spec);
  const Snapshot snap = generate_snapshot(spec, index);
  const double t = spec.times.at(index);
  std::vector<Vec3> out(snap.s.size());
  for (std::size_t v = 0; v < out.size(); ++v) {
    out[v] = (g.radius(snap.s[v], t + dt) - g.radius(snap.s[v], t)) * g.radial(snap.s[v], snap.theta[v]);
  }
  return out;
}

// Maximum outer-wall diameter of the closed-form surface at time t.
inline double analytic_max_diameter(const PatientSpec& spec, double t) {
  return 2.0 * (spec.base_radius + spec.amplitude.at(t));
}


// ---------------------------------------------------------------------------
// Cohorts

struct CohortSpec {
  std::uint64_t seed = 7;
  std::size_t train = 16;
  std::size_t holdout = 4;
  double edge_length = 4.0;
  double noise = 0.05;
};

// Random patient drawn from the cohort distribution: mixed linear and
// accelerating (logistic) amplitude schedules, straight and curved vessels,
// 4-5 snapshots with irregular gaps.
inline PatientSpec random_patient(std::uint64_t seed, const std::string& id, double edge_length, double noise) {
  std::mt19937_64 rng(seed);
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  PatientSpec p;
  p.id = id;
  p.seed = seed;
  p.edge_length = edge_length;
  p.noise = noise;
  p.base_radius = uni(9.0, 11.0);
  p.bulge_center = uni(50.0, 70.0);
  p.bulge_width = uni(10.0, 16.0);
  p.thickness_ratio = uni(0.3, 0.6);
  if (uni(0.0, 1.0) < 0.6) {
    p.amplitude.kind = Amplitude::Kind::linear;
    p.amplitude.a0 = uni(4.0, 16.0);
    p.amplitude.rate = uni(0.75, 2.25);
  } else {
    p.amplitude.kind = Amplitude::Kind::logistic;
    p.amplitude.a_max = uni(16.0, 26.0);
    p.amplitude.k = uni(0.4, 1.0);
    p.amplitude.t_mid = uni(1.0, 4.0);
  }
  p.curvature_radius = uni(0.0, 1.0) < 0.5 ? uni(150.0, 300.0) : 0.0;
  const std::size_t count = uni(0.0, 1.0) < 0.5 ? 4 : 5;
  p.times = {-uni(0.6, 1.4), 0.0};
  while (p.times.size() < count) p.times.push_back(p.times.back() + uni(0.6, 1.4));
  p.validate();
  return p;
}

// Train patients first (ids T000...), then holdout (H000...).
inline std::vector<PatientSpec> make_cohort(const CohortSpec& c) {
  std::vector<PatientSpec> out;
  std::seed_seq seq{static_cast<std::uint32_t>(c.seed), static_cast<std::uint32_t>(c.seed >> 32)};
  std::vector<std::uint32_t> seeds(2 * (c.train + c.holdout));
  seq.generate(seeds.begin(), seeds.end());
  char id[16];
  for (std::size_t i = 0; i < c.train + c.holdout; ++i) {
    const bool hold = i >= c.train;
    std::snprintf(id, sizeof id, "%s%03zu", hold ? "H" : "T", hold ? i - c.train : i);
    const std::uint64_t s = (static_cast<std::uint64_t>(seeds[2 * i]) << 32) | seeds[2 * i + 1];
    out.push_back(random_patient(s, id, c.edge_length, c.noise));
  }
  return out;
}

// Linear growth of the maximum diameter by 4 mm/year starting at 53 mm at
// t = 0, so the 55 mm threshold is crossed at t = 0.5 (month 6).
inline PatientSpec threshold_case(std::uint64_t seed = 99, double edge_length = 4.0) {
  PatientSpec p;
  p.id = "THRESH";
  p.seed = seed;
  p.edge_length = edge_length;
  p.amplitude.kind = Amplitude::Kind::linear;
  p.amplitude.a0 = 16.5;
  p.amplitude.rate = 2.0;
  p.times = {-1.0, 0.0, 1.0, 2.0};
  p.validate();
  return p;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const PatientSpec& s) {
  nlohmann::json a = {{"kind", s.amplitude.kind == Amplitude::Kind::linear ? "linear" : "logistic"}};
  if (s.amplitude.kind == Amplitude::Kind::linear) {
    a["a0"] = s.amplitude.a0;
    a["rate"] = s.amplitude.rate;
  } else {
    a["a_max"] = s.amplitude.a_max;
    a["k"] = s.amplitude.k;
    a["t_mid"] = s.amplitude.t_mid;
  }
  return {{"id", s.id},
          {"seed", s.seed},
          {"base_radius", s.base_radius},
          {"bulge_center", s.bulge_center},
          {"bulge_width", s.bulge_width},
          {"amplitude", a},
          {"length", s.length},
          {"times", s.times},
          {"noise", s.noise},
          {"edge_length", s.edge_length},
          {"curvature_radius", s.curvature_radius},
          {"thickness_ratio", s.thickness_ratio}};
}

inline PatientSpec patient_spec_from_json(const nlohmann::json& j) {
  PatientSpec s;
  try {
    s.id = j.value("id", s.id);
    s.seed = j.value("seed", s.seed);
    s.base_radius = j.value("base_radius", s.base_radius);
    s.bulge_center = j.value("bulge_center", s.bulge_center);
    s.bulge_width = j.value("bulge_width", s.bulge_width);
    s.length = j.value("length", s.length);
    s.times = j.value("times", s.times);
    s.noise = j.value("noise", s.noise);
    s.edge_length = j.value("edge_length", s.edge_length);
    s.curvature_radius = j.value("curvature_radius", s.curvature_radius);
    s.thickness_ratio = j.value("thickness_ratio", s.thickness_ratio);
    if (j.contains("amplitude")) {
      const auto& a = j.at("amplitude");
      const std::string kind = a.value("kind", std::string("linear"));
      if (kind == "linear") {
        s.amplitude.kind = Amplitude::Kind::linear;
      } else if (kind == "logistic") {
        s.amplitude.kind = Amplitude::Kind::logistic;
      } else {
        throw InvalidArgument("unknown amplitude kind '" + kind + "'");
      }
      s.amplitude.a0 = a.value("a0", s.amplitude.a0);
      s.amplitude.rate = a.value("rate", s.amplitude.rate);
      s.amplitude.a_max = a.value("a_max", s.amplitude.a_max);
      s.amplitude.k = a.value("k", s.amplitude.k);
      s.amplitude.t_mid = a.value("t_mid", s.amplitude.t_mid);
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("patient spec: ") + e.what());
  }
  s.validate();
  return s;
}

}  // namespace aaa::synth
