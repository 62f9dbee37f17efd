#include <gtest/gtest.h>

#include <numeric>
#include <random>
#include <sstream>

#include "aaa/model/growth_model.hpp"
#include "aaa/surface/metrics.hpp"
#include "gradcheck.hpp"
#include "meshes.hpp"

using namespace aaa;
using namespace aaa::model;
using aaa::surface::Vec3;

namespace {

ga::RigidMotion random_motion(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> angle(0.0, 2.0 * M_PI);
  std::uniform_real_distribution<double> t(-100.0, 100.0);
  std::normal_distribution<double> n(0.0, 1.0);
  return ga::RigidMotion::from_axis_angle(Eigen::Vector3d(n(rng), n(rng), n(rng)), angle(rng),
                                          Eigen::Vector3d(t(rng), t(rng), t(rng)));
}

// Slightly noisy tube with random feature fields (no symmetric ties).
surface::VascularModel toy_model(std::size_t rings, std::size_t segments, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.3);
  surface::VascularModel m;
  m.mesh = aaa::testing::tube([](double z) { return 10.0 + 3.0 * std::exp(-std::pow((z - 30.0) / 12.0, 2)); }, 60.0,
                              rings, segments);
  for (auto& v : m.mesh.vertices) v += Vec3(noise(rng), noise(rng), noise(rng));
  surface::compute_vertex_normals(m.mesh);
  m.mesh.regions.assign(m.mesh.size(), surface::Region::aorta);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (const char* name : surface::kFeatureNames) {
    auto& f = m.features[name];
    for (std::size_t i = 0; i < m.mesh.size(); ++i) f.push_back(u(rng));
  }
  return m;
}

surface::VascularModel moved(const surface::VascularModel& m, const ga::RigidMotion& rho) {
  surface::VascularModel out = m;
  for (auto& v : out.mesh.vertices) v = rho.apply(v);
  surface::compute_vertex_normals(out.mesh);
  return out;
}

// Gives every parameter a random non-zero value.
void scramble(GrowthModel& gm, std::uint64_t seed, double scale = 0.5) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto& p : gm.params()) {
    for (double& v : p.value) v = u(rng);
  }
}

ModelConfig small_config() {
  ModelConfig c;
  c.downsample_ratio = 0.1;
  c.channels = 4;
  c.heads = 2;
  c.mlp_hidden = 4;
  c.message_hidden = 4;
  c.interp_hidden = 4;
  c.blocks = 1;
  return c;
}

}  // namespace

TEST(BuildFeatures, EmbeddingStructure) {
  auto m = toy_model(6, 12, 1);
  for (auto& [name, f] : m.features) std::fill(f.begin(), f.end(), 0.0);
  const auto x = build_features(m, 1.0, Standardizer{});
  ASSERT_EQ(x.channels(), 9u);
  for (std::size_t v = 0; v < m.mesh.size(); ++v) {
    for (std::size_t c = 0; c < 7; ++c) {
      for (double a : x.at(v, c).c) EXPECT_EQ(a, 0.0);
    }
    const auto dt = x.at(v, 7);
    EXPECT_EQ(dt.c[0], 1.0);
    for (int s = 1; s < 16; ++s) EXPECT_EQ(dt.c[s], 0.0);
    const auto plane = x.at(v, 8);
    for (int s = 0; s < 16; ++s) {
      if (s < 1 || s > 4) {
        EXPECT_EQ(plane.c[s], 0.0) << s;
      }
    }
  }
}

TEST(BuildFeatures, PlaneChannelDecodesToTangentPlane) {
  const auto m = toy_model(6, 12, 2);
  const auto x = build_features(m, 0.5, Standardizer{});
  for (std::size_t v = 0; v < m.mesh.size(); v += 5) {
    const auto tp = surface::tangent_plane(m.mesh, v);
    const auto [n, d] = ga::extract_plane(x.at(v, 8));
    EXPECT_LT((n - tp.normal).norm(), 1e-9);
    EXPECT_NEAR(d, tp.offset, 1e-9);
  }
}

TEST(BuildFeatures, RigidMotionOnlyMovesPlaneChannel) {
  std::mt19937_64 rng(3);
  const auto m = toy_model(6, 12, 3);
  Standardizer s;
  s.mean = {1, 2, 3, 4, 5, 6, 7, 1};
  s.scale = {2, 2, 2, 2, 2, 2, 2, 0.5};
  const auto x = build_features(m, 0.75, s);
  for (int trial = 0; trial < 5; ++trial) {
    const auto rho = random_motion(rng);
    const auto y = build_features(moved(m, rho), 0.75, s);
    const auto expect = ga::apply_motion(rho, x);
    for (std::size_t v = 0; v < m.mesh.size(); ++v) {
      for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(x.at(v, c).c, y.at(v, c).c);
      for (int k = 0; k < 16; ++k) EXPECT_NEAR(y.at(v, 8).c[k], expect.at(v, 8).c[k], 1e-9);
    }
  }
}

TEST(BuildFeatures, Errors) {
  auto m = toy_model(4, 8, 4);
  EXPECT_THROW(build_features(m, 0.0, Standardizer{}), InvalidArgument);
  m.features.erase("osi");
  EXPECT_THROW(build_features(m, 1.0, Standardizer{}), DataError);
}

TEST(Standardizer, MomentsAndTimeStep) {
  auto a = toy_model(4, 8, 5);
  const auto s = fit_standardizer({&a}, 0.5, 2.0);
  const auto& f = a.features["radius"];
  const double mean = std::accumulate(f.begin(), f.end(), 0.0) / double(f.size());
  EXPECT_NEAR(s.mean[1], mean, 1e-12);
  EXPECT_NEAR(s.mean[7], 1.25, 1e-15);
  EXPECT_NEAR(s.scale[7], 1.5 / std::sqrt(12.0), 1e-15);
}

TEST(Tokenize, PartitionAndStencils) {
  const auto m = toy_model(10, 20, 6);
  const auto tk = make_tokenization(m.mesh, 0.05);
  EXPECT_EQ(tk.coarse.size(), 10u);
  std::size_t total = 0;
  for (const auto& c : tk.clusters.members) total += c.size();
  EXPECT_EQ(total, m.mesh.size());
  for (std::size_t v = 0; v < m.mesh.size(); ++v) {
    double s = 0.0;
    for (std::size_t j = 0; j < 3; ++j) s += tk.weights[v * 3 + j];
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  // Coarse vertices copy themselves.
  for (std::size_t k = 0; k < tk.coarse.size(); ++k) {
    EXPECT_EQ(tk.neighbors[tk.coarse[k] * 3], k);
    EXPECT_EQ(tk.weights[tk.coarse[k] * 3], 1.0);
  }
}

TEST(Tokenize, StencilOracle) {
  // Brute-force inverse-distance weights on random points.
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-10, 10);
  std::vector<Vec3> pts(40);
  for (auto& p : pts) p = Vec3(u(rng), u(rng), u(rng));
  Tokenization tk;
  tk.coarse = {3, 17, 25, 30, 8};
  interpolation_stencil(pts, tk);
  for (std::size_t v = 0; v < pts.size(); ++v) {
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t k = 0; k < 5; ++k) d.push_back({(pts[tk.coarse[k]] - pts[v]).norm(), k});
    std::sort(d.begin(), d.end());
    if (d[0].first == 0.0) continue;
    const double z = 1 / d[0].first + 1 / d[1].first + 1 / d[2].first;
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_EQ(tk.neighbors[v * 3 + j], d[j].second);
      EXPECT_NEAR(tk.weights[v * 3 + j], (1 / d[j].first) / z, 1e-12);
    }
  }
  // Fewer than three tokens: all of them.
  tk.coarse = {1, 2};
  interpolation_stencil(pts, tk);
  EXPECT_EQ(tk.stencil, 2u);
}

TEST(Tokenize, EqualValuesInterpolateExactly) {
  const auto m = toy_model(6, 12, 8);
  const auto tk = make_tokenization(m.mesh, 0.2);
  ga::ParamSet none;
  ga::Graph g(none);
  ga::MVTensor c(tk.coarse.size(), 1);
  for (std::size_t k = 0; k < tk.coarse.size(); ++k) c.set(k, 0, ga::embed_point(Vec3(1, 2, 3)));
  const auto up = ga::as_tensor(ga::gather_weighted(ga::as_var(g, c), tk.neighbors, tk.weights, tk.stencil));
  for (std::size_t v = 0; v < m.mesh.size(); ++v) {
    for (int s = 0; s < 16; ++s) EXPECT_NEAR(up.at(v, 0).c[s], ga::embed_point(Vec3(1, 2, 3)).c[s], 1e-12);
  }
}

TEST(Tokenize, Equivariance) {
  std::mt19937_64 rng(9);
  const auto m = toy_model(8, 16, 10);
  GrowthModel gm(small_config());
  scramble(gm, 11);
  auto tokens = [&](const surface::VascularModel& mm) {
    ga::Graph g(static_cast<const ga::ParamSet&>(gm.params()));
    const auto tk = tokenization_for(gm, mm.mesh);
    ga::Var x0 = ga::as_var(g, build_features(mm, 1.0, gm.stats, gm.config().length_scale));
    return ga::as_tensor(tokenize(g, gm, x0, mm.mesh, tk));
  };
  const auto base = tokens(m);
  for (int trial = 0; trial < 20; ++trial) {
    const auto rho = random_motion(rng);
    // Internal units: translations scale with 1 / length_scale.
    ga::RigidMotion internal = rho;
    internal.translation /= gm.config().length_scale;
    const auto expect = ga::apply_motion(internal, base);
    const auto got = tokens(moved(m, rho));
    double err = 0.0, norm = 0.0;
    for (std::size_t k = 0; k < got.data().size(); ++k) {
      err = std::max(err, std::abs(got.data()[k] - expect.data()[k]));
      norm = std::max(norm, std::abs(expect.data()[k]));
    }
    EXPECT_LT(err, 1e-6 * std::max(1.0, norm));
  }
}

TEST(Predict, FreshModelPredictsZero) {
  const auto m = toy_model(6, 12, 12);
  GrowthModel gm(ModelConfig{});
  for (const auto& v : predict(gm, m, 1.0)) EXPECT_EQ(v, Vec3::Zero());
}

TEST(Predict, Equivariance) {
  std::mt19937_64 rng(13);
  const auto m = toy_model(10, 20, 14);
  ModelConfig cfg;
  cfg.downsample_ratio = 0.1;
  GrowthModel gm(cfg);
  scramble(gm, 15, 0.3);
  const auto base = predict(gm, m, 1.2);
  double mag = 0.0;
  for (const auto& v : base) mag = std::max(mag, v.norm());
  ASSERT_GT(mag, 1e-3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto rho = random_motion(rng);
    const auto got = predict(gm, moved(m, rho), 1.2);
    double err = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) err = std::max(err, (got[i] - rho.apply_vector(base[i])).norm());
    EXPECT_LT(err, 1e-5) << trial;
  }
}

TEST(Predict, VertexReindexingPermutesOutput) {
  const auto m = toy_model(8, 16, 16);
  GrowthModel gm(small_config());
  scramble(gm, 17);
  const auto base = predict(gm, m, 1.0);
  std::vector<std::uint32_t> perm(m.mesh.size());
  std::iota(perm.begin(), perm.end(), 0u);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(18));
  // new index i holds old vertex perm[i]
  std::vector<std::uint32_t> inv(perm.size());
  for (std::uint32_t i = 0; i < perm.size(); ++i) inv[perm[i]] = i;
  surface::VascularModel p = m;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    p.mesh.vertices[i] = m.mesh.vertices[perm[i]];
    p.mesh.regions[i] = m.mesh.regions[perm[i]];
    for (auto& [name, f] : p.features) f[i] = m.features.at(name)[perm[i]];
  }
  for (auto& f : p.mesh.faces) {
    for (auto& v : f) v = inv[v];
  }
  surface::compute_vertex_normals(p.mesh);
  const auto got = predict(gm, p, 1.0);
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_LT((got[i] - base[perm[i]]).norm(), 1e-9);
}

TEST(Predict, DeterministicAndConditionedOnTimeStep) {
  const auto m = toy_model(8, 16, 19);
  GrowthModel a(small_config()), b(small_config());
  scramble(a, 20);
  scramble(b, 20);
  const auto pa = predict(a, m, 1.0), pb = predict(b, m, 1.0);
  EXPECT_EQ(pa, pb);
  const auto pc = predict(a, m, 1.5);
  double diff = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i) diff = std::max(diff, (pa[i] - pc[i]).norm());
  EXPECT_GT(diff, 1e-6);
}

// Readout scaled by dt: same network, unscaled output divided by dt.
TEST(Predict, DtScaledOutputVanishesAtZero) {
  const auto m = toy_model(8, 16, 30);
  ModelConfig on = small_config(), off = small_config();
  off.dt_scaled_output = false;
  GrowthModel a(on), b(off);
  scramble(a, 31);
  scramble(b, 31);
  for (double dt : {0.25, 1.0, 1.75}) {
    const auto pa = predict(a, m, dt), pb = predict(b, m, dt);
    for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_LT((pa[i] - dt * pb[i]).norm(), 1e-12 * (1.0 + pb[i].norm()));
  }
  double tiny = 0.0, unit = 0.0;
  for (const auto& v : predict(a, m, 1e-6)) tiny = std::max(tiny, v.norm());
  for (const auto& v : predict(a, m, 1.0)) unit = std::max(unit, v.norm());
  ASSERT_GT(unit, 1e-3);
  EXPECT_LT(tiny, 1e-4 * unit);

  auto records = b.to_records();
  for (auto& r : records) {
    if (r.name == "meta.model.config") r.values.pop_back();  // checkpoint without the flag
  }
  EXPECT_FALSE(GrowthModel::from_records(records).config().dt_scaled_output);
  EXPECT_TRUE(GrowthModel::from_records(a.to_records()).config().dt_scaled_output);
}

TEST(Predict, CheckpointRoundTrip) {
  const auto m = toy_model(6, 12, 21);
  GrowthModel gm(small_config());
  scramble(gm, 22);
  gm.stats.mean[2] = 0.7;
  std::stringstream ss;
  ga::write_checkpoint(ss, gm.to_records());
  const auto back = GrowthModel::from_records(ga::read_checkpoint(ss));
  EXPECT_EQ(predict(gm, m, 1.0), predict(back, m, 1.0));
  EXPECT_EQ(back.config().channels, 4u);
  auto records = gm.to_records();
  records.erase(records.begin());
  EXPECT_THROW(GrowthModel::from_records(records), DataError);
}

TEST(ChamferLoss, MatchesMetric) {
  const auto m = toy_model(5, 10, 23);
  const auto target = toy_model(5, 10, 24);
  ga::ParamSet none;
  ga::Graph g(none);
  std::vector<double> d(m.mesh.size() * 3, 0.1);
  ga::Var disp = g.constant(d, ga::Shape{m.mesh.size(), 3});
  std::vector<std::size_t> all(m.mesh.size());
  std::iota(all.begin(), all.end(), 0);
  const double l = chamfer_loss(disp, m.mesh.vertices, all, surface::PointIndex(target.mesh.vertices)).value()[0];
  std::vector<Vec3> moved_pts = m.mesh.vertices;
  for (auto& v : moved_pts) v += Vec3(0.1, 0.1, 0.1);
  EXPECT_NEAR(l, surface::chamfer(moved_pts, target.mesh.vertices), 1e-12);
}

// End-to-end Chamfer gradient on a 50-vertex mesh.
TEST(ChamferLoss, GradcheckEndToEnd) {
  const auto m = toy_model(5, 10, 25);
  ASSERT_EQ(m.mesh.size(), 50u);
  auto target = toy_model(5, 10, 26);
  for (auto& v : target.mesh.vertices) v *= 1.05;
  ModelConfig cfg = small_config();
  cfg.downsample_ratio = 0.2;
  GrowthModel gm(cfg);
  scramble(gm, 27, 0.4);
  const auto tk = tokenization_for(gm, m.mesh);
  const surface::PointIndex tgt(target.mesh.vertices);
  std::vector<std::size_t> region(m.mesh.size());
  std::iota(region.begin(), region.end(), 0);
  const auto res = aaa::testing::gradcheck(gm.params(), [&](ga::Graph& g) {
    return chamfer_loss(forward(g, gm, m, 1.0, tk), m.mesh.vertices, region, tgt);
  }, 1e-5, 32);
  EXPECT_LT(res.worst_relative_error, 1e-3) << res.worst_param;
}
