#pragma once

// Fixed-step RK4 for dx/dt = f(x, t) and its discrete adjoint.

#include <cmath>
#include <vector>

#include "aaa/temporal/velocity_field.hpp"

namespace aaa::temporal {

inline void require_finite(const Points& x) {
  if (!x.allFinite()) throw NumericalError("trajectory diverged");
}

template <typename Field>
Points rk4_step(const Field& f, const Points& x, double t, double h) {
  const Points k1 = f(x, t);
  const Points k2 = f(x + 0.5 * h * k1, t + 0.5 * h);
  const Points k3 = f(x + 0.5 * h * k2, t + 0.5 * h);
  const Points k4 = f(x + h * k3, t + h);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

// `steps` equal steps from t_start to t_end (either direction).
template <typename Field>
Points integrate(const Field& f, Points x, double t_start, double t_end, std::size_t steps) {
  if (steps == 0) throw InvalidArgument("integrate: steps must be >= 1");
  if (t_start == t_end) return x;
  const double h = (t_end - t_start) / static_cast<double>(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    x = rk4_step(f, x, t_start + static_cast<double>(k) * h, h);
    require_finite(x);
  }
  return x;
}

// Reverse pass through one step: accumulates parameter gradients in `f` and
// returns dL/dx given dL/dy. Stage evaluations are recomputed.
inline Points rk4_step_backward(VelocityField& f, const Points& x, double t, double h, const Points& gy) {
  VelocityField::Cache c1, c2, c3, c4;
  const Points k1 = f.forward(x, t, c1);
  const Points k2 = f.forward(x + 0.5 * h * k1, t + 0.5 * h, c2);
  const Points k3 = f.forward(x + 0.5 * h * k2, t + 0.5 * h, c3);
  f.forward(x + h * k3, t + h, c4);

  Points gx = gy;
  const Points g4 = f.backward(c4, (h / 6.0) * gy);
  gx += g4;
  const Points g3 = f.backward(c3, (h / 3.0) * gy + h * g4);
  gx += g3;
  const Points g2 = f.backward(c2, (h / 3.0) * gy + 0.5 * h * g3);
  gx += g2;
  gx += f.backward(c1, (h / 6.0) * gy + 0.5 * h * g2);
  return gx;
}

// Step schedule from t0 to t1 (t1 >= t0) on the grid t0 + k * step, with a
// shorter final step landing exactly on t1.
struct Step {
  double t;
  double h;
};

inline std::vector<Step> grid_steps(double t0, double t1, double step) {
  std::vector<Step> out;
  if (!(step > 0.0)) throw InvalidArgument("step size must be positive");
  for (std::size_t k = 0;; ++k) {
    const double a = t0 + static_cast<double>(k) * step;
    if (a >= t1 - 1e-12 * std::max(1.0, std::abs(t1))) break;
    const double b = std::min(t0 + static_cast<double>(k + 1) * step, t1);
    out.push_back({a, b - a});
  }
  return out;
}

}  // namespace aaa::temporal
