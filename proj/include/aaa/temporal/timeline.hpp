#pragma once

// Per-patient continuous growth: fitting a velocity field to irregular
// snapshots, advecting the first snapshot to arbitrary times, and the
// six-month historic-growth feature.

#include <algorithm>
#include <atomic>
#include <exception>
#include <limits>
#include <random>
#include <optional>
#include <string>
#include <thread>
#include <vector>
#include <nlohmann/json.hpp>

#include "aaa/ga/params.hpp"
#include "aaa/surface/metrics.hpp"
#include "aaa/surface/morphology.hpp"
#include "aaa/surface/sampling.hpp"
#include "aaa/temporal/ode.hpp"

namespace aaa::temporal {

inline constexpr double kLookback = 0.5;  // years
inline constexpr double kTimeTolerance = 1e-9;

struct PatientTimeline {
  std::string id;
  std::vector<surface::VascularModel> models;  // ordered by time
  std::optional<VelocityField> field;

  std::vector<double> times() const {
    std::vector<double> t;
    for (const auto& m : models) t.push_back(m.time);
    return t;
  }
  double start() const { return models.front().time; }
  double end() const { return models.back().time; }
};

inline void validate(const PatientTimeline& tl) {
  if (tl.models.size() < 3) throw DataError("timeline " + tl.id + ": at least three snapshots required");
  for (std::size_t i = 1; i < tl.models.size(); ++i) {
    if (!(tl.models[i].time > tl.models[i - 1].time)) {
      throw DataError("timeline " + tl.id + ": snapshot times must be strictly increasing");
    }
  }
  for (const auto& m : tl.models) surface::validate(m.mesh);
}

inline Points to_points(const std::vector<surface::Vec3>& v) {
  Points p(3, static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) p.col(static_cast<Eigen::Index>(i)) = v[i];
  return p;
}

inline std::vector<surface::Vec3> to_vectors(const Points& p) {
  std::vector<surface::Vec3> v(static_cast<std::size_t>(p.cols()));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = p.col(static_cast<Eigen::Index>(i));
  return v;
}

// RK4 states of a point set on the field's global step grid. Queries at any
// t in the span reproduce a direct integration bit for bit.
class Trajectory {
 public:
  Trajectory(VelocityField field, Points x0, double t0, double t1)
      : field_(std::move(field)), t0_(t0), t1_(t1) {
    steps_ = grid_steps(t0, t1, step());
    states_.reserve(steps_.size() + 1);
    states_.push_back(std::move(x0));
    for (const auto& s : steps_) {
      states_.push_back(rk4_step(field_, states_.back(), s.t, s.h));
      require_finite(states_.back());
    }
  }

  double step() const { return 1.0 / field_.config().steps_per_year; }
  double t0() const { return t0_; }
  double t1() const { return t1_; }
  const VelocityField& field() const { return field_; }

  Points at(double t) const {
    if (t < t0_ - kTimeTolerance || t > t1_ + kTimeTolerance) throw InvalidArgument("extrapolation not supported");
    t = std::clamp(t, t0_, t1_);
    const auto s = grid_steps(t0_, t, step());
    if (s.empty()) return states_.front();
    const auto n = s.size();
    if (s.back().t == steps_[n - 1].t && s.back().h == steps_[n - 1].h) return states_[n];
    Points x = rk4_step(field_, states_[n - 1], s.back().t, s.back().h);
    require_finite(x);
    return x;
  }

 private:
  VelocityField field_;
  double t0_, t1_;
  std::vector<Step> steps_;
  std::vector<Points> states_;
};

// Advects the first snapshot of a fitted timeline.
class ShapeInterpolator {
 public:
  explicit ShapeInterpolator(const PatientTimeline& tl)
      : base_(require_field(tl).models.front().mesh),
        traj_(*tl.field, to_points(base_.vertices), tl.start(), tl.end()) {}

  surface::TriMesh shape(double t) const {
    surface::TriMesh m = base_;
    m.vertices = to_vectors(traj_.at(t));
    surface::compute_vertex_normals(m);
    return m;
  }

  const Trajectory& trajectory() const { return traj_; }

 private:
  static const PatientTimeline& require_field(const PatientTimeline& tl) {
    if (!tl.field) throw InvalidArgument("timeline " + tl.id + " has no fitted velocity field");
    return tl;
  }

  surface::TriMesh base_;
  Trajectory traj_;
};

inline surface::TriMesh interpolate_shape(const PatientTimeline& tl, double t) {
  return ShapeInterpolator(tl).shape(t);
}

// Closest-surface distance from the shape at t to the shape six months
// earlier. Observed times use the observed mesh, other times the
// interpolated one.
inline std::vector<double> historic_growth(const PatientTimeline& tl, double t,
                                           const ShapeInterpolator* interp = nullptr) {
  if (t - kLookback < tl.start() - kTimeTolerance) throw InvalidArgument("historic_growth: lookback before first scan");
  std::optional<ShapeInterpolator> own;
  if (!interp) interp = &own.emplace(tl);
  const surface::TriMesh past = interp->shape(std::max(t - kLookback, tl.start()));
  for (const auto& m : tl.models) {
    if (std::abs(m.time - t) <= kTimeTolerance) return surface::closest_surface_distance(m.mesh, past);
  }
  return surface::closest_surface_distance(interp->shape(t), past);
}

// Per-vertex displacement over the lookback window: each vertex of `mesh`
// (the shape at t) is integrated backwards to t - 0.5 and the displacement
// x(t) - x(t - 0.5) returned.
inline std::vector<surface::Vec3> lookback_displacement(const PatientTimeline& tl, const surface::TriMesh& mesh,
                                                        double t) {
  if (!tl.field) throw InvalidArgument("timeline " + tl.id + " has no fitted velocity field");
  if (t - kLookback < tl.start() - kTimeTolerance) throw InvalidArgument("lookback before first scan");
  const auto steps = static_cast<std::size_t>(std::ceil(kLookback * tl.field->config().steps_per_year - 1e-9));
  const Points x = to_points(mesh.vertices);
  const Points past = integrate(*tl.field, x, t, t - kLookback, std::max<std::size_t>(steps, 1));
  return to_vectors(x - past);
}

// ---------------------------------------------------------------------------
// Fitting

struct FitConfig {
  FieldConfig field;
  std::size_t epochs = 500;
  double learning_rate = 3e-3;
  std::size_t sample_points = 0;  // farthest-point subsample of the advected t0 points, 0 = all
  double chamfer_ceiling = 1.0;   // mm; a larger final residual raises a warning
  std::uint64_t seed = 0;
};

inline nlohmann::json to_json(const FitConfig& c) {
  return {{"field",
           {{"hidden_layers", c.field.hidden_layers},
            {"width", c.field.width},
            {"omega0", c.field.omega0},
            {"steps_per_year", c.field.steps_per_year}}},
          {"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"sample_points", c.sample_points},
          {"chamfer_ceiling", c.chamfer_ceiling},
          {"seed", c.seed}};
}

inline FitConfig fit_config_from_json(const nlohmann::json& j) {
  FitConfig c;
  try {
    if (j.contains("field")) {
      const auto& f = j.at("field");
      c.field.hidden_layers = f.value("hidden_layers", c.field.hidden_layers);
      c.field.width = f.value("width", c.field.width);
      c.field.omega0 = f.value("omega0", c.field.omega0);
      c.field.steps_per_year = f.value("steps_per_year", c.field.steps_per_year);
    }
    c.epochs = j.value("epochs", c.epochs);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.sample_points = j.value("sample_points", c.sample_points);
    c.chamfer_ceiling = j.value("chamfer_ceiling", c.chamfer_ceiling);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("fit config: ") + e.what());
  }
  if (c.field.hidden_layers == 0 || c.field.width == 0 || !(c.field.steps_per_year > 0.0)) {
    throw InvalidArgument("fit config: empty field architecture or step count");
  }
  if (c.epochs == 0 || !(c.learning_rate > 0.0)) throw InvalidArgument("fit config: epochs and rate must be positive");
  return c;
}

struct FitResult {
  VelocityField field;
  std::vector<double> loss;      // per epoch, summed over snapshots
  std::vector<double> residual;  // full-resolution Chamfer at each snapshot after t0
  std::vector<std::string> warnings;
};

namespace detail {

// Chamfer distance between P (moving) and a fixed target, with dL/dP.
inline double chamfer_with_grad(const Points& p, const surface::PointIndex& q, Points& grad) {
  const auto np = p.cols();
  const auto nq = static_cast<Eigen::Index>(q.size());
  const surface::PointIndex pi(to_vectors(p));
  grad.setZero(3, np);
  double fwd = 0.0, bwd = 0.0;
  for (Eigen::Index i = 0; i < np; ++i) {
    const auto hit = q.nearest(p.col(i));
    const double d = std::sqrt(hit.squared_distance);
    fwd += d;
    if (d > 0.0) grad.col(i) += (p.col(i) - q.points()[hit.index]) / (d * static_cast<double>(np));
  }
  for (Eigen::Index j = 0; j < nq; ++j) {
    const surface::Vec3& y = q.points()[static_cast<std::size_t>(j)];
    const auto hit = pi.nearest(y);
    const double d = std::sqrt(hit.squared_distance);
    bwd += d;
    const auto i = static_cast<Eigen::Index>(hit.index);
    if (d > 0.0) grad.col(i) += (p.col(i) - y) / (d * static_cast<double>(nq));
  }
  return fwd / static_cast<double>(np) + bwd / static_cast<double>(nq);
}

inline std::vector<surface::Vec3> subsample(const std::vector<surface::Vec3>& v, std::size_t count,
                                            std::uint64_t seed) {
  if (count == 0 || count >= v.size()) return v;
  std::mt19937_64 rng(seed);
  const auto start = std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng);
  return surface::gather(v, surface::farthest_point_sample(v, count, start));
}

}  // namespace detail

// Sum over snapshots after t0 of Chamfer(advected x0, snapshot), on the
// field's step grid. evaluate() accumulates parameter gradients.
class FitObjective {
 public:
  FitObjective(Points x0, std::vector<std::vector<surface::Vec3>> targets, std::vector<double> times, double t0,
               double steps_per_year)
      : x0_(std::move(x0)), times_(std::move(times)) {
    if (targets.size() != times_.size() || times_.empty()) throw InvalidArgument("fit: target/time mismatch");
    for (auto& t : targets) targets_.emplace_back(std::move(t));
    const double step = 1.0 / steps_per_year;
    steps_ = grid_steps(t0, times_.back(), step);
    for (double t : times_) {
      const auto s = grid_steps(t0, t, step);
      if (s.empty()) throw InvalidArgument("fit: target time must follow t0");
      const auto n = s.size();
      if (s.back().t == steps_[n - 1].t && s.back().h == steps_[n - 1].h) land_.push_back({n, std::nullopt});
      else land_.push_back({n - 1, s.back()});
    }
  }

  double evaluate(VelocityField& f, bool with_grad = true) {
    std::vector<Points> x(steps_.size() + 1), gx(steps_.size() + 1);
    x[0] = x0_;
    for (std::size_t k = 0; k < steps_.size(); ++k) {
      x[k + 1] = rk4_step(f, x[k], steps_[k].t, steps_[k].h);
      require_finite(x[k + 1]);
    }
    for (auto& g : gx) g.setZero(3, x0_.cols());
    double loss = 0.0;
    for (std::size_t j = 0; j < times_.size(); ++j) {
      const auto& l = land_[j];
      Points g;
      if (!l.partial) {
        loss += detail::chamfer_with_grad(x[l.n], targets_[j], g);
        gx[l.n] += g;
      } else {
        const Points y = rk4_step(f, x[l.n], l.partial->t, l.partial->h);
        require_finite(y);
        loss += detail::chamfer_with_grad(y, targets_[j], g);
        if (with_grad) gx[l.n] += rk4_step_backward(f, x[l.n], l.partial->t, l.partial->h, g);
      }
    }
    if (!with_grad) return loss;
    for (std::size_t k = steps_.size(); k-- > 0;) {
      if (gx[k + 1].isZero(0.0)) continue;
      gx[k] += rk4_step_backward(f, x[k], steps_[k].t, steps_[k].h, gx[k + 1]);
    }
    return loss;
  }

 private:
  struct Landing {
    std::size_t n;               // full grid steps before the target
    std::optional<Step> partial;  // final shorter step, if any
  };
  Points x0_;
  std::vector<surface::PointIndex> targets_;
  std::vector<double> times_;
  std::vector<Step> steps_;
  std::vector<Landing> land_;
};

inline FitResult fit(const PatientTimeline& tl, const FitConfig& cfg) {
  validate(tl);
  if (cfg.epochs == 0) throw InvalidArgument("fit: epochs must be >= 1");
  const double t0 = tl.start(), t1 = tl.end();

  Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector3d hi = -lo;
  for (const auto& m : tl.models) {
    for (const auto& v : m.mesh.vertices) lo = lo.cwiseMin(v), hi = hi.cwiseMax(v);
  }
  const Eigen::Vector3d pad = 0.05 * (hi - lo);
  FitResult out{VelocityField(cfg.field, lo - pad, hi + pad, t0, t1, cfg.seed), {}, {}, {}};
  VelocityField& f = out.field;

  std::vector<std::vector<surface::Vec3>> targets;
  std::vector<double> times;
  for (std::size_t j = 1; j < tl.models.size(); ++j) {
    targets.push_back(tl.models[j].mesh.vertices);
    times.push_back(tl.models[j].time);
  }
  FitObjective objective(to_points(detail::subsample(tl.models.front().mesh.vertices, cfg.sample_points, cfg.seed)),
                         std::move(targets), std::move(times), t0, cfg.field.steps_per_year);

  ga::Adam adam({cfg.learning_rate, 0.9, 0.999, 1e-8});
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    f.params().zero_grad();
    const double loss = objective.evaluate(f);
    if (!std::isfinite(loss)) throw NumericalError("fit " + tl.id + ": loss diverged at epoch " + std::to_string(epoch));
    out.loss.push_back(loss);
    adam.step(f.params());
  }

  PatientTimeline fitted = tl;
  fitted.field = f;
  const ShapeInterpolator interp(fitted);
  for (std::size_t j = 1; j < tl.models.size(); ++j) {
    const double r = surface::chamfer(interp.shape(tl.models[j].time).vertices, tl.models[j].mesh.vertices);
    out.residual.push_back(r);
    if (r > cfg.chamfer_ceiling) {
      out.warnings.push_back("fit " + tl.id + ": residual " + std::to_string(r) + " mm at t=" +
                             std::to_string(tl.models[j].time) + " exceeds ceiling " +
                             std::to_string(cfg.chamfer_ceiling) + " mm");
    }
  }
  return out;
}

// Fits several patients on up to `threads` workers; patient i uses seed
// cfg.seed + i so results do not depend on the worker count.
inline std::vector<FitResult> fit_all(const std::vector<PatientTimeline>& tls, const FitConfig& cfg,
                                      std::size_t threads = 1) {
  std::vector<std::optional<FitResult>> res(tls.size());
  std::vector<std::exception_ptr> errs(tls.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i; (i = next++) < tls.size();) {
      try {
        FitConfig c = cfg;
        c.seed = cfg.seed + i;
        res[i] = fit(tls[i], c);
      } catch (...) {
        errs[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t k = 1; k < std::max<std::size_t>(threads, 1); ++k) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  std::vector<FitResult> out;
  for (std::size_t i = 0; i < tls.size(); ++i) {
    if (errs[i]) std::rethrow_exception(errs[i]);
    out.push_back(std::move(*res[i]));
  }
  return out;
}

}  // namespace aaa::temporal
