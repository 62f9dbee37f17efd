#pragma once

// Baselines, ensembling, threshold rollout and the evaluation harness.

#include <atomic>
#include <thread>

#include "aaa/surface/metrics.hpp"
#include "aaa/surface/morphology.hpp"
#include "aaa/trainer/trainer.hpp"

namespace aaa::trainer {

using Field = std::vector<Vec3>;

// Displacement of the input snapshot `index` of a timeline over dt.
using Predictor = std::function<Field(const temporal::PatientTimeline&, std::size_t index, double dt)>;

inline Field baseline_zero(const surface::VascularModel& model, double /*dt*/) {
  return Field(model.mesh.size(), Vec3::Zero());
}

// Linear extrapolation of the last six months: (dt / 0.5) times the
// displacement of each vertex since t - 0.5, found by integrating the
// velocity field backwards from the shape at t.
inline Field baseline_hist(const temporal::PatientTimeline& tl, double t, double dt) {
  if (!tl.field) throw InvalidArgument("baseline_hist: timeline " + tl.id + " has no fitted velocity field");
  if (t - temporal::kLookback < tl.start() - temporal::kTimeTolerance) {
    throw InvalidArgument("baseline_hist: insufficient history before t=" + std::to_string(t));
  }
  const surface::TriMesh* mesh = nullptr;
  for (const auto& m : tl.models) {
    if (std::abs(m.time - t) <= temporal::kTimeTolerance) mesh = &m.mesh;
  }
  std::optional<surface::TriMesh> interpolated;
  if (!mesh) mesh = &interpolated.emplace(temporal::interpolate_shape(tl, t));
  Field d = temporal::lookback_displacement(tl, *mesh, t);
  const double factor = dt / temporal::kLookback;
  for (auto& v : d) v *= factor;
  return d;
}

// Per vertex: mean of the members' unit directions, renormalised, times
// the mean magnitude. Zero vectors add no direction.
inline Field ensemble_mean(const std::vector<Field>& members) {
  if (members.empty()) throw InvalidArgument("ensemble: no members");
  const std::size_t n = members.front().size();
  for (const auto& m : members) {
    if (m.size() != n) throw InvalidArgument("ensemble: member size mismatch");
  }
  Field out(n, Vec3::Zero());
  const double k = static_cast<double>(members.size());
  for (std::size_t i = 0; i < n; ++i) {
    Vec3 dir = Vec3::Zero();
    double mag = 0.0;
    for (const auto& m : members) {
      const double r = m[i].norm();
      mag += r;
      if (r > 0.0) dir += m[i] / r;
    }
    const double len = dir.norm();
    if (len > 0.0) out[i] = (mag / k) * dir / len;
  }
  return out;
}

inline Field ensemble_predict(const std::vector<const model::GrowthModel*>& models, const surface::VascularModel& input,
                              double dt) {
  if (models.empty()) throw InvalidArgument("ensemble: no members");
  if (models.size() == 1) return model::predict(*models.front(), input, dt);
  std::vector<Field> members;
  for (const auto* m : models) members.push_back(model::predict(*m, input, dt));
  return ensemble_mean(members);
}

inline Predictor zero_predictor() {
  return [](const temporal::PatientTimeline& tl, std::size_t i, double dt) { return baseline_zero(tl.models[i], dt); };
}

inline Predictor hist_predictor() {
  return [](const temporal::PatientTimeline& tl, std::size_t i, double dt) {
    return baseline_hist(tl, tl.models[i].time, dt);
  };
}

inline Predictor model_predictor(const model::GrowthModel& gm) {
  return [&gm](const temporal::PatientTimeline& tl, std::size_t i, double dt) {
    return model::predict(gm, tl.models[i], dt);
  };
}

inline Predictor ensemble_predictor(std::vector<const model::GrowthModel*> models) {
  return [models = std::move(models)](const temporal::PatientTimeline& tl, std::size_t i, double dt) {
    return ensemble_predict(models, tl.models[i], dt);
  };
}

// ---------------------------------------------------------------------------
// Threshold crossing

struct ThresholdResult {
  bool crosses = false;
  std::optional<int> month;
  std::vector<double> diameters;  // max diameter after 1..horizon months
};

// Repeated conditioning on the original input with growing dt (no feedback
// of predicted shapes).
inline ThresholdResult predict_threshold_crossing(const std::function<Field(double dt)>& field,
                                                  const surface::VascularModel& input, double threshold = 55.0,
                                                  int horizon_months = 24) {
  if (horizon_months < 1) throw InvalidArgument("threshold: horizon must be at least one month");
  const double d0 = surface::max_diameter(input).max;
  if (d0 >= threshold) {
    throw InvalidArgument("threshold: input diameter " + std::to_string(d0) + " mm already exceeds " +
                          std::to_string(threshold) + " mm");
  }
  ThresholdResult r;
  for (int k = 1; k <= horizon_months; ++k) {
    const auto mesh = model::deform(input.mesh, field(k / 12.0));
    r.diameters.push_back(surface::max_diameter(mesh, input.centerline).max);
    if (!r.crosses && r.diameters.back() >= threshold) {
      r.crosses = true;
      r.month = k;
    }
  }
  return r;
}

inline ThresholdResult predict_threshold_crossing(const model::GrowthModel& gm, const surface::VascularModel& input,
                                                  double threshold = 55.0, int horizon_months = 24) {
  const auto tk = model::tokenization_for(gm, input.mesh);
  return predict_threshold_crossing(
      [&](double dt) {
        ga::Graph g(gm.params());
        const auto& v = model::forward(g, gm, input, dt, tk).value();
        Field out(input.mesh.size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = Vec3(v[3 * i], v[3 * i + 1], v[3 * i + 2]);
        return out;
      },
      input, threshold, horizon_months);
}

// Per-vertex arc length of the displacement trajectory 0, d(1 month), ...,
// d(horizon months).
inline std::vector<double> rollout_arc_lengths(const std::function<Field(double dt)>& field, std::size_t n,
                                               int horizon_months = 24) {
  std::vector<Field> steps;
  steps.emplace_back(n, Vec3::Zero());
  for (int k = 1; k <= horizon_months; ++k) {
    steps.push_back(field(k / 12.0));
    if (steps.back().size() != n) throw InvalidArgument("rollout: field size mismatch");
  }
  std::vector<double> out(n, 0.0);
  std::vector<Vec3> path(steps.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < steps.size(); ++k) path[k] = steps[k][i];
    out[i] = surface::arc_length(path);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

struct CaseMetrics {
  std::string patient;
  double t = 0.0;
  double dt = 0.0;
  double chamfer = 0.0;         // mm, eval region
  double hd95 = 0.0;            // mm, eval region
  double diameter_error = 0.0;  // mm, |predicted - target| maximum diameter
  double pred_growth = 0.0;     // mm^3, infrarenal volume change
  double ref_growth = 0.0;
  std::optional<double> rgvd;
};

// Median and interquartile range (linear-interpolation percentiles).
struct Summary {
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  std::size_t count = 0;
  double iqr() const { return q3 - q1; }
};

inline Summary summarize(const std::vector<double>& v) {
  if (v.empty()) return {};
  return {surface::percentile(v, 50.0), surface::percentile(v, 25.0), surface::percentile(v, 75.0), v.size()};
}

struct MetricsReport {
  std::vector<CaseMetrics> rows;
  std::map<std::string, Summary> aggregate;  // chamfer, hd95, diameter_error, rgvd, abs_rgvd
};

inline void aggregate(MetricsReport& r) {
  std::map<std::string, std::vector<double>> cols;
  for (const auto& c : r.rows) {
    cols["chamfer"].push_back(c.chamfer);
    cols["hd95"].push_back(c.hd95);
    cols["diameter_error"].push_back(c.diameter_error);
    if (c.rgvd) {
      cols["rgvd"].push_back(*c.rgvd);
      cols["abs_rgvd"].push_back(std::abs(*c.rgvd));
    }
  }
  r.aggregate.clear();
  for (const char* k : {"chamfer", "hd95", "diameter_error", "rgvd", "abs_rgvd"}) r.aggregate[k] = summarize(cols[k]);
}

// One prediction to score: input snapshot `index` of `tl` advanced by dt and
// compared with `target` (whose centerline defines its diameter and volume).
struct EvalCase {
  const temporal::PatientTimeline* tl = nullptr;
  std::size_t index = 0;
  double dt = 0.0;
  surface::VascularModel target;
};

// Surface distances are taken between dense samples of the two surfaces
// (mm between samples), not between the mesh vertices.
inline constexpr double kSampleSpacing = 1.0;

inline CaseMetrics score(const EvalCase& c, const Field& disp, surface::Region region) {
  const auto& input = c.tl->models[c.index];
  const surface::TriMesh pred = model::deform(input.mesh, disp);
  // throws on unlabelled meshes or an empty region
  detail::region_subset(input.mesh, region);
  detail::region_subset(c.target.mesh, region);
  const auto p = surface::surface_samples(pred, region, kSampleSpacing);
  const auto q = surface::surface_samples(c.target.mesh, region, kSampleSpacing);
  if (p.empty() || q.empty()) throw DataError(std::string("no faces inside region ") + surface::region_name(region));
  CaseMetrics m;
  m.patient = c.tl->id;
  m.t = input.time;
  m.dt = c.dt;
  m.chamfer = surface::chamfer(p, q);
  m.hd95 = surface::hd95(p, q);
  m.diameter_error =
      std::abs(surface::max_diameter(pred, input.centerline).max - surface::max_diameter(c.target).max);
  const double v0 = surface::region_volume(input);
  m.pred_growth = surface::region_volume(pred, input.centerline) - v0;
  m.ref_growth = surface::region_volume(c.target) - v0;
  m.rgvd = surface::rgvd(m.pred_growth, m.ref_growth);
  return m;
}

// Cases are scored on up to `threads` workers; rows keep the case order.
inline MetricsReport evaluate_cases(const Predictor& predictor, const std::vector<EvalCase>& cases,
                                    surface::Region region, std::size_t threads = 1) {
  MetricsReport r;
  r.rows.resize(cases.size());
  std::vector<std::exception_ptr> errs(cases.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i; (i = next++) < cases.size();) {
      try {
        const auto& c = cases[i];
        r.rows[i] = score(c, predictor(*c.tl, c.index, c.dt), region);
      } catch (...) {
        errs[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t k = 1; k < std::max<std::size_t>(threads, 1); ++k) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (const auto& e : errs) {
    if (e) std::rethrow_exception(e);
  }
  aggregate(r);
  return r;
}

// Consecutive observed pairs (t_i, t_{i+1}) with i >= 1; t0 has no
// historic growth feature.
inline std::vector<EvalCase> observed_cases(const std::vector<temporal::PatientTimeline>& data) {
  std::vector<EvalCase> cases;
  for (const auto& tl : data) {
    for (std::size_t i = 1; i + 1 < tl.models.size(); ++i) {
      cases.push_back({&tl, i, tl.models[i + 1].time - tl.models[i].time, tl.models[i + 1]});
    }
  }
  return cases;
}

inline MetricsReport evaluate(const Predictor& predictor, const std::vector<temporal::PatientTimeline>& data,
                              surface::Region region = surface::Region::infrarenal, std::size_t threads = 1) {
  return evaluate_cases(predictor, observed_cases(data), region, threads);
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const CaseMetrics& c) {
  nlohmann::json j = {{"patient", c.patient},     {"t", c.t},
                      {"dt", c.dt},               {"chamfer", c.chamfer},
                      {"hd95", c.hd95},           {"diameter_error", c.diameter_error},
                      {"pred_growth", c.pred_growth}, {"ref_growth", c.ref_growth}};
  j["rgvd"] = c.rgvd ? nlohmann::json(*c.rgvd) : nlohmann::json(nullptr);
  return j;
}

inline nlohmann::json to_json(const Summary& s) {
  return {{"median", s.median}, {"q1", s.q1}, {"q3", s.q3}, {"iqr", s.iqr()}, {"count", s.count}};
}

inline nlohmann::json aggregate_json(const MetricsReport& r) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, s] : r.aggregate) j[k] = to_json(s);
  return j;
}

}  // namespace aaa::trainer
