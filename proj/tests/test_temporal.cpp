#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "aaa/temporal/timeline.hpp"
#include "meshes.hpp"

using namespace aaa;
using namespace aaa::temporal;

namespace {

Points random_points(std::size_t n, double scale, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  Points p(3, static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = u(rng);
  return p;
}

// A field with non-zero output weights so it actually moves points.
VelocityField busy_field(std::uint64_t seed, double speed = 1.0) {
  FieldConfig cfg{2, 16, 3.0, 8.0};
  VelocityField f(cfg, Eigen::Vector3d::Constant(-10), Eigen::Vector3d::Constant(10), 0.0, 3.0, seed);
  std::mt19937_64 rng(seed + 1);
  std::uniform_real_distribution<double> u(-speed, speed);
  for (auto* name : {"field.w_out", "field.b_out"}) {
    for (double& v : f.params()[f.params().find(name)].value) v = u(rng) / 4.0;
  }
  return f;
}

surface::VascularModel snapshot(const surface::TriMesh& m, double t) {
  surface::VascularModel v;
  v.mesh = m;
  v.time = t;
  return v;
}

PatientTimeline sphere_timeline(const std::vector<double>& times, const std::vector<double>& radii) {
  PatientTimeline tl;
  tl.id = "sphere";
  for (std::size_t i = 0; i < times.size(); ++i) tl.models.push_back(snapshot(aaa::testing::icosphere(2, radii[i]), times[i]));
  return tl;
}

}  // namespace

TEST(Integrate, ZeroFieldLeavesPointsUnchanged) {
  const Points x = random_points(20, 5.0, 1);
  const auto zero = [](const Points& p, double) { return Points::Zero(3, p.cols()).eval(); };
  EXPECT_EQ(integrate(zero, x, 0.0, 2.0, 7), x);
  VelocityField fresh(FieldConfig{}, Eigen::Vector3d::Constant(-5), Eigen::Vector3d::Constant(5), 0.0, 2.0, 3);
  EXPECT_EQ(integrate(fresh, x, 0.0, 2.0, 7), x);
}

TEST(Integrate, ConstantFieldIsExact) {
  const Points x = random_points(10, 5.0, 2);
  const auto c = [](const Points& p, double) {
    Points v = Points::Zero(3, p.cols());
    v.row(0).setOnes();
    return v;
  };
  const Points y = integrate(c, x, 0.0, 2.0, 5);
  EXPECT_LT((y.row(0).array() - x.row(0).array() - 2.0).abs().maxCoeff(), 1e-12);
  EXPECT_EQ(y.bottomRows<2>(), x.bottomRows<2>());
}

TEST(Integrate, LinearFieldMatchesExponential) {
  const Points x = random_points(10, 3.0, 3);
  const auto lin = [](const Points& p, double) { return p; };
  const Points y = integrate(lin, x, 0.0, 1.0, 100);
  EXPECT_LT((y - x * std::exp(1.0)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Integrate, FourthOrderConvergence) {
  Points x(3, 1);
  x << 1.0, -2.0, 0.5;
  const auto lin = [](const Points& p, double) { return p; };
  const Points exact = x * std::exp(1.0);
  for (std::size_t n : {4, 8, 16}) {
    const double e1 = (integrate(lin, x, 0.0, 1.0, n) - exact).norm();
    const double e2 = (integrate(lin, x, 0.0, 1.0, 2 * n) - exact).norm();
    EXPECT_GE(e1 / e2, 8.0) << n;
    EXPECT_LE(e1 / e2, 32.0) << n;
  }
}

TEST(Integrate, SameTimeIsIdentity) {
  const auto f = busy_field(4);
  const Points x = random_points(15, 8.0, 5);
  EXPECT_EQ(integrate(f, x, 1.3, 1.3, 4), x);
}

TEST(Integrate, Composition) {
  const auto f = busy_field(6);
  const Points x = random_points(15, 8.0, 7);
  // Equal step sizes: 0 -> 1 in 8 steps, 1 -> 2.5 in 12 steps, 0 -> 2.5 in 20.
  const Points a = integrate(f, integrate(f, x, 0.0, 1.0, 8), 1.0, 2.5, 12);
  const Points b = integrate(f, x, 0.0, 2.5, 20);
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Integrate, ReverseUndoesForward) {
  const auto f = busy_field(8);
  const Points x = random_points(15, 8.0, 9);
  const Points back = integrate(f, integrate(f, x, 0.5, 1.5, 64), 1.5, 0.5, 64);
  EXPECT_LT((back - x).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Integrate, DivergenceIsReported) {
  const auto blow = [](const Points& p, double) { return (p.array() * p.array() * 1e6).matrix().eval(); };
  Points x = Points::Constant(3, 2, 10.0);
  try {
    integrate(blow, x, 0.0, 1.0, 4);
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_STREQ(e.what(), "trajectory diverged");
  }
  EXPECT_THROW(integrate(blow, x, 0.0, 1.0, 0), InvalidArgument);
}

TEST(GridSteps, LandsExactlyOnTarget) {
  const auto s = grid_steps(0.0, 1.3, 0.25);
  ASSERT_EQ(s.size(), 6u);
  EXPECT_DOUBLE_EQ(s.back().t + s.back().h, 1.3);
  EXPECT_NEAR(s.back().h, 0.05, 1e-12);
  EXPECT_TRUE(grid_steps(0.7, 0.7, 0.25).empty());
  EXPECT_EQ(grid_steps(0.0, 1.0, 0.25).size(), 4u);
}

// dL/dparams and dL/dx of L = <w, f(x, t)> against central differences.
TEST(VelocityFieldGrad, MatchesFiniteDifferences) {
  auto f = busy_field(10);
  const Points x = random_points(6, 8.0, 11);
  const Points w = random_points(6, 1.0, 12);
  const double t = 1.1;
  auto loss = [&](const VelocityField& g, const Points& xx) { return (g(xx, t).array() * w.array()).sum(); };
  f.params().zero_grad();
  VelocityField::Cache c;
  f.forward(x, t, c);
  const Points gx = f.backward(c, w);
  const double h = 1e-5;
  double worst = 0.0;
  for (auto& p : f.params()) {
    if (p.name.rfind("meta.", 0) == 0) continue;
    for (std::size_t k = 0; k < p.value.size(); k += 7) {
      const double v = p.value[k];
      p.value[k] = v + h;
      const double lp = loss(f, x);
      p.value[k] = v - h;
      const double lm = loss(f, x);
      p.value[k] = v;
      const double fd = (lp - lm) / (2 * h);
      worst = std::max(worst, std::abs(fd - p.grad[k]) / std::max(1.0, std::abs(fd)));
    }
  }
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Points xp = x, xm = x;
    xp.data()[i] += h;
    xm.data()[i] -= h;
    const double fd = (loss(f, xp) - loss(f, xm)) / (2 * h);
    worst = std::max(worst, std::abs(fd - gx.data()[i]) / std::max(1.0, std::abs(fd)));
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(VelocityFieldGrad, Rk4StepBackwardMatchesFiniteDifferences) {
  auto f = busy_field(13);
  const Points x = random_points(5, 8.0, 14);
  const Points w = random_points(5, 1.0, 15);
  const double t = 0.4, dt = 0.3;
  auto loss = [&](const Points& xx) { return (rk4_step(f, xx, t, dt).array() * w.array()).sum(); };
  f.params().zero_grad();
  const Points gx = rk4_step_backward(f, x, t, dt, w);
  const double h = 1e-5;
  double worst = 0.0;
  for (auto& p : f.params()) {
    if (p.name.rfind("meta.", 0) == 0) continue;
    for (std::size_t k = 0; k < p.value.size(); k += 5) {
      const double v = p.value[k];
      p.value[k] = v + h;
      const double lp = loss(x);
      p.value[k] = v - h;
      const double lm = loss(x);
      p.value[k] = v;
      const double fd = (lp - lm) / (2 * h);
      worst = std::max(worst, std::abs(fd - p.grad[k]) / std::max(1.0, std::abs(fd)));
    }
  }
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Points xp = x, xm = x;
    xp.data()[i] += h;
    xm.data()[i] -= h;
    const double fd = (loss(xp) - loss(xm)) / (2 * h);
    worst = std::max(worst, std::abs(fd - gx.data()[i]) / std::max(1.0, std::abs(fd)));
  }
  EXPECT_LT(worst, 1e-4);
}

// Whole-trajectory Chamfer objective, including a partial final step.
TEST(VelocityFieldGrad, FitObjectiveMatchesFiniteDifferences) {
  auto f = busy_field(16, 2.0);
  const Points x0 = random_points(12, 8.0, 17);
  std::vector<std::vector<surface::Vec3>> targets = {to_vectors(random_points(10, 8.0, 18)),
                                                     to_vectors(random_points(9, 8.0, 19))};
  FitObjective obj(x0, targets, {0.8, 1.3}, 0.0, 8.0);
  f.params().zero_grad();
  obj.evaluate(f);
  const double h = 1e-6;
  double worst = 0.0;
  for (auto& p : f.params()) {
    if (p.name.rfind("meta.", 0) == 0) continue;
    for (std::size_t k = 0; k < p.value.size(); k += 11) {
      const double v = p.value[k];
      p.value[k] = v + h;
      const double lp = obj.evaluate(f, false);
      p.value[k] = v - h;
      const double lm = obj.evaluate(f, false);
      p.value[k] = v;
      const double fd = (lp - lm) / (2 * h);
      worst = std::max(worst, std::abs(fd - p.grad[k]) / std::max(1e-3, std::abs(fd)));
    }
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(VelocityFieldCheckpoint, RoundTripIsExact) {
  const auto f = busy_field(20);
  std::stringstream ss;
  ga::write_checkpoint(ss, ga::to_records(f.params()));
  const auto g = VelocityField::from_records(ga::read_checkpoint(ss));
  const Points x = random_points(10, 8.0, 21);
  EXPECT_EQ(f(x, 0.7), g(x, 0.7));
  EXPECT_EQ(g.config().width, 16u);
  EXPECT_EQ(g.config().steps_per_year, 8.0);
}

TEST(VelocityFieldCheckpoint, MissingMetadataIsDataError) {
  const auto f = busy_field(22);
  auto records = ga::to_records(f.params());
  records.pop_back();
  EXPECT_THROW(VelocityField::from_records(records), DataError);
}

TEST(Trajectory, QueriesMatchDirectIntegration) {
  const auto f = busy_field(23);
  const Points x = random_points(8, 8.0, 24);
  const Trajectory traj(f, x, 0.0, 2.7);
  for (double t : {0.0, 0.125, 0.3, 1.0, 2.6, 2.7}) {
    Points y = x;
    for (const auto& s : grid_steps(0.0, t, traj.step())) y = rk4_step(f, y, s.t, s.h);
    EXPECT_EQ(traj.at(t), y) << t;
  }
  EXPECT_THROW(traj.at(2.8), InvalidArgument);
  EXPECT_THROW(traj.at(-0.1), InvalidArgument);
}

TEST(Timeline, ValidationRules) {
  auto tl = sphere_timeline({0.0, 1.0}, {5.0, 5.0});
  EXPECT_THROW(validate(tl), DataError);
  tl = sphere_timeline({0.0, 1.0, 1.0}, {5.0, 5.0, 5.0});
  EXPECT_THROW(validate(tl), DataError);
  EXPECT_THROW(interpolate_shape(sphere_timeline({0.0, 1.0, 2.0}, {5, 5, 5}), 0.5), InvalidArgument);
}

class FittedSphere : public ::testing::Test {
 protected:
  static FitConfig config() {
    FitConfig c;
    c.field = {2, 32, 4.0, 8.0};
    c.epochs = 150;
    c.learning_rate = 3e-3;
    c.seed = 5;
    return c;
  }
};

TEST_F(FittedSphere, StaticTimelineStaysPut) {
  auto tl = sphere_timeline({0.0, 0.7, 1.5, 2.0}, {10, 10, 10, 10});
  // Hold out the second snapshot.
  PatientTimeline train = tl;
  train.models.erase(train.models.begin() + 1);
  const auto res = fit(train, config());
  train.field = res.field;
  const auto held = interpolate_shape(train, 0.7);
  EXPECT_LT(surface::chamfer(held.vertices, tl.models[1].mesh.vertices), 0.1);
  std::vector<double> speed;
  const Points x = to_points(held.vertices);
  for (double t : {0.0, 0.7, 1.5, 2.0}) {
    const Points v = res.field(x, t);
    for (Eigen::Index i = 0; i < v.cols(); ++i) speed.push_back(v.col(i).norm());
  }
  EXPECT_LT(surface::median(speed), 0.05);
  for (double h : historic_growth(train, 1.5)) EXPECT_LT(h, 0.1);
}

TEST_F(FittedSphere, UniformGrowthHistoricFeature) {
  // Radius 10 + 2 t mm.
  auto tl = sphere_timeline({0.0, 1.0, 2.0}, {10, 12, 14});
  auto cfg = config();
  cfg.epochs = 300;
  const auto res = fit(tl, cfg);
  ASSERT_EQ(res.residual.size(), 2u);
  tl.field = res.field;

  EXPECT_EQ(interpolate_shape(tl, 0.0).vertices, tl.models[0].mesh.vertices);
  for (std::size_t j = 1; j < 3; ++j) {
    const double r = surface::chamfer(interpolate_shape(tl, tl.models[j].time).vertices, tl.models[j].mesh.vertices);
    EXPECT_EQ(r, res.residual[j - 1]);
  }
  const double edge = surface::mean_edge_length(tl.models[1].mesh);
  for (double r : res.residual) EXPECT_LT(r, 0.5 * edge);

  for (double h : historic_growth(tl, 1.0)) EXPECT_NEAR(h, 1.0, 0.1);
  EXPECT_THROW(historic_growth(tl, 0.4), InvalidArgument);

  // Loss decreased, field smooth in time.
  EXPECT_LT(res.loss.back(), 0.1 * res.loss.front());
  const ShapeInterpolator interp(tl);
  const double day = 1.0 / 365.0;
  const Points a = interp.trajectory().at(1.0), b = interp.trajectory().at(1.0 + day);
  EXPECT_LT((b - a).colwise().norm().maxCoeff(), 0.1);

  // Backward lookback displacement of the observed mesh: about 1 mm radial.
  const auto disp = lookback_displacement(tl, tl.models[1].mesh, 1.0);
  std::vector<double> radial;
  for (std::size_t i = 0; i < disp.size(); ++i) radial.push_back(disp[i].dot(tl.models[1].mesh.vertices[i].normalized()));
  EXPECT_NEAR(surface::median(radial), 1.0, 0.1);
}

TEST(FitAll, IndependentOfWorkerCount) {
  std::vector<PatientTimeline> tls = {sphere_timeline({0.0, 1.0, 2.0}, {8, 9, 10}),
                                      sphere_timeline({0.0, 0.5, 1.5}, {8, 8.5, 9})};
  FitConfig cfg;
  cfg.field = {1, 8, 4.0, 4.0};
  cfg.epochs = 5;
  const auto a = fit_all(tls, cfg, 1);
  const auto b = fit_all(tls, cfg, 2);
  for (std::size_t i = 0; i < tls.size(); ++i) EXPECT_EQ(a[i].loss, b[i].loss);
}
