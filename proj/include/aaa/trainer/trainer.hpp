#pragma once

// Temporal-augmentation training of the growth model.

#include <cmath>
#include <functional>
#include <numbers>
#include <numeric>
#include <random>

#include "aaa/model/growth_model.hpp"
#include "aaa/temporal/timeline.hpp"

namespace aaa::trainer {

using surface::Vec3;

struct TrainConfig {
  double learning_rate = 3e-4;
  std::size_t batch_size = 4;
  std::size_t epochs = 2000;
  double t_min = 0.5;  // years
  double t_max = 2.0;
  surface::Region loss_region = surface::Region::aorta;
  surface::Region eval_region = surface::Region::infrarenal;
  std::uint64_t seed = 0;
  // Off: only observed (t_i, t_j) pairs with i >= 1, targets are the
  // observed meshes.
  bool augmentation = true;
  // "constant" or "cosine" (decays to lr_floor * learning_rate at the last epoch)
  std::string lr_schedule = "constant";
  double lr_floor = 0.05;

  double rate_at(std::size_t epoch) const {
    if (lr_schedule == "constant" || epochs < 2) return learning_rate;
    const double x = static_cast<double>(epoch) / static_cast<double>(epochs - 1);
    return learning_rate * (lr_floor + (1.0 - lr_floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * x)));
  }

  void validate() const {
    if (!(learning_rate > 0.0) || batch_size == 0 || epochs == 0) {
      throw InvalidArgument("train config: rates and counts must be positive");
    }
    if (!(t_min > 0.0) || !(t_min < t_max)) throw InvalidArgument("train config: need 0 < t_min < t_max");
    if (lr_schedule != "constant" && lr_schedule != "cosine") {
      throw InvalidArgument("train config: lr_schedule must be constant or cosine");
    }
    if (!(lr_floor >= 0.0 && lr_floor <= 1.0)) throw InvalidArgument("train config: lr_floor outside [0, 1]");
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"t_min", c.t_min},
          {"t_max", c.t_max},
          {"loss_region", surface::region_name(c.loss_region)},
          {"eval_region", surface::region_name(c.eval_region)},
          {"seed", c.seed},
          {"augmentation", c.augmentation},
          {"lr_schedule", c.lr_schedule},
          {"lr_floor", c.lr_floor}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.t_min = j.value("t_min", c.t_min);
    c.t_max = j.value("t_max", c.t_max);
    if (j.contains("loss_region")) c.loss_region = surface::parse_region(j.at("loss_region").get<std::string>());
    if (j.contains("eval_region")) c.eval_region = surface::parse_region(j.at("eval_region").get<std::string>());
    c.seed = j.value("seed", c.seed);
    c.augmentation = j.value("augmentation", c.augmentation);
    c.lr_schedule = j.value("lr_schedule", c.lr_schedule);
    c.lr_floor = j.value("lr_floor", c.lr_floor);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Sampling

struct TrainingPair {
  std::size_t index = 0;  // input snapshot
  double dt = 0.0;
  surface::TriMesh target;
};

// Input times usable for augmentation: t_1 .. t_{m-2} with at least t_min
// of observed span left after them.
inline std::vector<std::size_t> augmentation_inputs(const temporal::PatientTimeline& tl, double t_min) {
  std::vector<std::size_t> out;
  for (std::size_t i = 1; i + 1 < tl.models.size(); ++i) {
    if (tl.models[i].time + t_min <= tl.end() + temporal::kTimeTolerance) out.push_back(i);
  }
  return out;
}

struct TimeSample {
  std::size_t index = 0;
  double dt = 0.0;
};

// t uniform over the usable inputs, dt ~ U[t_min, min(t_max, t_end - t)].
inline TimeSample sample_time(const temporal::PatientTimeline& tl, std::mt19937_64& rng, double t_min, double t_max) {
  const auto inputs = augmentation_inputs(tl, t_min);
  if (inputs.empty()) throw DataError("timeline " + tl.id + " too short for t_min = " + std::to_string(t_min));
  TimeSample s;
  s.index = inputs[std::uniform_int_distribution<std::size_t>(0, inputs.size() - 1)(rng)];
  const double t = tl.models[s.index].time;
  const double hi = std::max(t_min, std::min(t_max, tl.end() - t));
  s.dt = std::uniform_real_distribution<double>(t_min, hi)(rng);
  return s;
}

// Random input snapshot and time step with the interpolated shape at t + dt
// as target. The velocity field is only read.
inline TrainingPair sample_training_pair(const temporal::PatientTimeline& tl, std::mt19937_64& rng, double t_min,
                                         double t_max, const temporal::ShapeInterpolator* interp = nullptr) {
  temporal::validate(tl);
  const TimeSample s = sample_time(tl, rng, t_min, t_max);
  std::optional<temporal::ShapeInterpolator> own;
  if (!interp) interp = &own.emplace(tl);
  TrainingPair p;
  p.index = s.index;
  p.dt = s.dt;
  p.target = interp->shape(std::min(tl.models[s.index].time + s.dt, tl.end()));
  return p;
}

// ---------------------------------------------------------------------------
// Training

struct TrainResult {
  model::GrowthModel model;
  std::vector<double> loss;  // mean Chamfer per epoch
};

using EpochHook = std::function<void(std::size_t epoch, double loss)>;

namespace detail {

// Everything that does not change between epochs.
struct PreparedPatient {
  const temporal::PatientTimeline* tl = nullptr;
  std::optional<temporal::ShapeInterpolator> interp;
  std::vector<model::Tokenization> tokens;        // per snapshot (empty for t0)
  std::vector<std::vector<std::size_t>> subset;   // loss-region vertices per snapshot
  std::vector<std::pair<std::size_t, std::size_t>> observed_pairs;
  std::vector<std::size_t> base_subset;           // loss-region vertices of the t0 mesh
};

inline std::vector<std::size_t> region_subset(const surface::TriMesh& m, surface::Region r) {
  std::vector<std::size_t> out;
  if (m.regions.size() != m.size()) throw DataError("mesh has no region labels");
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (surface::in_region(m.regions[i], r)) out.push_back(i);
  }
  if (out.empty()) throw DataError(std::string("mesh has no vertices in region ") + surface::region_name(r));
  return out;
}

inline std::vector<Vec3> subset_points(const surface::TriMesh& m, const std::vector<std::size_t>& idx) {
  return surface::gather(m.vertices, idx);
}

}  // namespace detail

inline TrainResult train(const std::vector<temporal::PatientTimeline>& data, const TrainConfig& cfg,
                         model::ModelConfig mcfg, const EpochHook& hook = {}) {
  cfg.validate();
  if (data.empty()) throw InvalidArgument("train: empty dataset");
  mcfg.t_min = cfg.t_min;
  mcfg.t_max = cfg.t_max;
  mcfg.seed = cfg.seed;
  TrainResult out{model::GrowthModel(mcfg), {}};
  model::GrowthModel& gm = out.model;

  std::vector<detail::PreparedPatient> prepared(data.size());
  std::vector<const surface::VascularModel*> inputs;
  for (std::size_t p = 0; p < data.size(); ++p) {
    const auto& tl = data[p];
    temporal::validate(tl);
    auto& pp = prepared[p];
    pp.tl = &tl;
    if (cfg.augmentation) {
      if (!tl.field) throw InvalidArgument("train: timeline " + tl.id + " has no fitted velocity field");
      if (augmentation_inputs(tl, cfg.t_min).empty()) {
        throw DataError("timeline " + tl.id + " too short for t_min = " + std::to_string(cfg.t_min));
      }
      pp.interp.emplace(tl);
      pp.base_subset = detail::region_subset(tl.models.front().mesh, cfg.loss_region);
    }
    pp.tokens.resize(tl.models.size());
    pp.subset.resize(tl.models.size());
    for (std::size_t i = 1; i < tl.models.size(); ++i) {
      pp.tokens[i] = model::tokenization_for(gm, tl.models[i].mesh);
      pp.subset[i] = detail::region_subset(tl.models[i].mesh, cfg.loss_region);
      inputs.push_back(&tl.models[i]);
      for (std::size_t j = i + 1; j < tl.models.size(); ++j) pp.observed_pairs.emplace_back(i, j);
    }
    if (!cfg.augmentation && pp.observed_pairs.empty()) throw DataError("timeline " + tl.id + " has no training pairs");
  }
  gm.stats = model::fit_standardizer(inputs, cfg.t_min, cfg.t_max);

  std::mt19937_64 rng(cfg.seed);
  ga::Adam adam({cfg.learning_rate, 0.9, 0.999, 1e-8});
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    adam.set_learning_rate(cfg.rate_at(epoch));
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(order.size(), b + cfg.batch_size);
      gm.params().zero_grad();
      for (std::size_t k = b; k < e; ++k) {
        const auto& pp = prepared[order[k]];
        const auto& tl = *pp.tl;
        std::size_t index;
        double dt;
        std::vector<Vec3> target;
        if (cfg.augmentation) {
          auto pair = sample_training_pair(tl, rng, cfg.t_min, cfg.t_max, &*pp.interp);
          index = pair.index;
          dt = pair.dt;
          target = detail::subset_points(pair.target, pp.base_subset);
        } else {
          const auto [i, j] =
              pp.observed_pairs[std::uniform_int_distribution<std::size_t>(0, pp.observed_pairs.size() - 1)(rng)];
          index = i;
          dt = tl.models[j].time - tl.models[i].time;
          target = detail::subset_points(tl.models[j].mesh, detail::region_subset(tl.models[j].mesh, cfg.loss_region));
        }
        const auto& input = tl.models[index];
        ga::Graph g(gm.params());
        const ga::Var disp = model::forward(g, gm, input, dt, pp.tokens[index]);
        const surface::PointIndex target_index(std::move(target));
        ga::Var loss = model::chamfer_loss(disp, input.mesh.vertices, pp.subset[index], target_index);
        const double value = loss.value()[0];
        if (!std::isfinite(value)) {
          throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch) + ", patient " + tl.id +
                               ", t=" + std::to_string(input.time) + ", dt=" + std::to_string(dt));
        }
        epoch_loss += value;
        g.backward(ga::scale(loss, 1.0 / static_cast<double>(e - b)));
      }
      for (const auto& prm : gm.params()) {
        for (double gval : prm.grad) {
          if (!std::isfinite(gval)) throw NumericalError("train: non-finite gradient in " + prm.name);
        }
      }
      adam.step(gm.params());
    }
    out.loss.push_back(epoch_loss / static_cast<double>(order.size()));
    if (hook) hook(epoch, out.loss.back());
  }
  return out;
}

}  // namespace aaa::trainer
