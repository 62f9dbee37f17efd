#pragma once

// Per-vertex input tensor (c = 9):
//   0-3 morphology scalars (thickness, radius, geo_inlet, geo_outlet)
//   4-5 hemodynamic scalars (tawss, osi)
//   6   historic growth
//   7   time step (years)
//   8   oriented tangent plane
// Scalars are standardised with frozen statistics.

#include <array>
#include <cmath>

#include "aaa/ga/tensor.hpp"
#include "aaa/surface/morphology.hpp"

namespace aaa::model {

inline constexpr std::size_t kInputChannels = 9;
inline constexpr std::size_t kScalarInputs = 8;  // seven features plus the time step

struct Standardizer {
  std::array<double, kScalarInputs> mean{};
  std::array<double, kScalarInputs> scale = {1, 1, 1, 1, 1, 1, 1, 1};

  double apply(std::size_t k, double v) const { return (v - mean[k]) / scale[k]; }

  std::vector<double> to_vector() const {
    std::vector<double> v(mean.begin(), mean.end());
    v.insert(v.end(), scale.begin(), scale.end());
    return v;
  }
  static Standardizer from_vector(const std::vector<double>& v) {
    if (v.size() != 2 * kScalarInputs) throw DataError("standardizer: expected 16 values");
    Standardizer s;
    for (std::size_t k = 0; k < kScalarInputs; ++k) s.mean[k] = v[k], s.scale[k] = v[k + kScalarInputs];
    return s;
  }
};

// Feature statistics over all vertices of `models`. The time step is drawn
// from U[t_min, t_max] during training, so its statistics are those of the
// uniform distribution.
inline Standardizer fit_standardizer(const std::vector<const surface::VascularModel*>& models, double t_min,
                                     double t_max) {
  Standardizer s;
  for (std::size_t k = 0; k < surface::kFeatureNames.size(); ++k) {
    double sum = 0.0, sq = 0.0, n = 0.0;
    for (const auto* m : models) {
      const auto it = m->features.find(surface::kFeatureNames[k]);
      if (it == m->features.end()) continue;
      for (double v : it->second) sum += v, sq += v * v, n += 1.0;
    }
    if (n == 0.0) continue;
    s.mean[k] = sum / n;
    const double var = std::max(sq / n - s.mean[k] * s.mean[k], 0.0);
    s.scale[k] = std::sqrt(var) > 1e-9 ? std::sqrt(var) : 1.0;
  }
  s.mean[7] = 0.5 * (t_min + t_max);
  s.scale[7] = t_max > t_min ? (t_max - t_min) / std::sqrt(12.0) : 1.0;
  return s;
}

// `length_scale` divides all coordinates (mm) before embedding.
inline ga::MVTensor build_features(const surface::VascularModel& model, double dt, const Standardizer& stats,
                                   double length_scale = 1.0) {
  if (!(dt > 0.0)) throw InvalidArgument("build_features: time step must be positive");
  const std::size_t n = model.mesh.size();
  ga::MVTensor x(n, kInputChannels);
  for (std::size_t k = 0; k < surface::kFeatureNames.size(); ++k) {
    const auto& f = model.feature(surface::kFeatureNames[k]);
    for (std::size_t v = 0; v < n; ++v) x.set(v, k, ga::embed_scalar(stats.apply(k, f[v])));
  }
  const double step = stats.apply(7, dt);
  const auto planes = surface::tangent_planes(model.mesh);
  for (std::size_t v = 0; v < n; ++v) {
    x.set(v, 7, ga::embed_scalar(step));
    x.set(v, 8, ga::embed_plane(planes[v].normal, planes[v].offset / length_scale));
  }
  return x;
}

}  // namespace aaa::model
