#pragma once

// Growth predictor g: per-vertex multivector features -> message passing to
// farthest-point tokens -> GATr blocks -> inverse-distance interpolation back
// to the vertices -> gated MLP with the input as skip -> Euclidean vector.

#include <algorithm>
#include <nlohmann/json.hpp>
#include <random>

#include "aaa/ga/layers.hpp"
#include "aaa/model/features.hpp"
#include "aaa/surface/sampling.hpp"

namespace aaa::model {

struct ModelConfig {
  double downsample_ratio = 0.05;
  std::size_t blocks = 2;
  std::size_t heads = 4;
  std::size_t channels = 8;
  std::size_t mlp_hidden = 16;
  std::size_t message_hidden = 8;
  std::size_t interp_hidden = 16;
  double t_min = 0.5;  // years
  double t_max = 2.0;
  double length_scale = 10.0;  // mm per internal unit
  std::uint64_t seed = 0;
  // Readout times dt: the network predicts a mean velocity, so dt = 0 gives
  // no deformation and short horizons are not extrapolated from [t_min, t_max].
  bool dt_scaled_output = true;

  void validate() const {
    if (!(downsample_ratio > 0.0 && downsample_ratio <= 1.0)) throw InvalidArgument("model: downsample ratio must lie in (0, 1]");
    if (blocks == 0 || heads == 0 || channels == 0 || mlp_hidden == 0 || message_hidden == 0 || interp_hidden == 0) {
      throw InvalidArgument("model: layer counts must be >= 1");
    }
    if (channels % heads != 0) throw InvalidArgument("model: channels must be divisible by heads");
    if (!(t_min < t_max)) throw InvalidArgument("model: t_min must be below t_max");
    if (!(length_scale > 0.0)) throw InvalidArgument("model: length scale must be positive");
  }
};

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"downsample_ratio", c.downsample_ratio}, {"blocks", c.blocks},
          {"heads", c.heads},                       {"channels", c.channels},
          {"mlp_hidden", c.mlp_hidden},             {"message_hidden", c.message_hidden},
          {"interp_hidden", c.interp_hidden},       {"t_min", c.t_min},
          {"t_max", c.t_max},                       {"length_scale", c.length_scale},
          {"seed", c.seed},                         {"dt_scaled_output", c.dt_scaled_output}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.downsample_ratio = j.value("downsample_ratio", c.downsample_ratio);
    c.blocks = j.value("blocks", c.blocks);
    c.heads = j.value("heads", c.heads);
    c.channels = j.value("channels", c.channels);
    c.mlp_hidden = j.value("mlp_hidden", c.mlp_hidden);
    c.message_hidden = j.value("message_hidden", c.message_hidden);
    c.interp_hidden = j.value("interp_hidden", c.interp_hidden);
    c.t_min = j.value("t_min", c.t_min);
    c.t_max = j.value("t_max", c.t_max);
    c.length_scale = j.value("length_scale", c.length_scale);
    c.seed = j.value("seed", c.seed);
    c.dt_scaled_output = j.value("dt_scaled_output", c.dt_scaled_output);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

class GrowthModel {
 public:
  explicit GrowthModel(const ModelConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    message_ = ga::make_gated_mlp(params_, "message", kInputChannels + 1, cfg.message_hidden, cfg.channels, rng);
    for (std::size_t b = 0; b < cfg.blocks; ++b) {
      blocks_.push_back(ga::make_gatr_block(params_, "block" + std::to_string(b), cfg.channels, cfg.heads,
                                            cfg.mlp_hidden, rng));
    }
    interp_ = ga::make_gated_mlp(params_, "interp", cfg.channels + kInputChannels, cfg.interp_hidden, 1, rng);
    // A fresh model predicts no growth.
    ga::zero_init(params_, interp_.output);
    ga::zero_init(params_, interp_.skip);
  }

  const ModelConfig& config() const { return cfg_; }
  ga::ParamSet& params() { return params_; }
  const ga::ParamSet& params() const { return params_; }
  const ga::GatedMlp& message() const { return message_; }
  const std::vector<ga::GatrBlock>& blocks() const { return blocks_; }
  const ga::GatedMlp& interp() const { return interp_; }

  Standardizer stats;

  std::vector<ga::CheckpointRecord> to_records() const {
    auto r = ga::to_records(params_);
    const auto& c = cfg_;
    r.push_back({"meta.model.config",
                 {c.downsample_ratio, double(c.blocks), double(c.heads), double(c.channels), double(c.mlp_hidden),
                  double(c.message_hidden), double(c.interp_hidden), c.t_min, c.t_max, c.length_scale,
                  double(c.seed), c.dt_scaled_output ? 1.0 : 0.0}});
    r.push_back({"meta.model.standardizer", stats.to_vector()});
    return r;
  }

  static GrowthModel from_records(const std::vector<ga::CheckpointRecord>& records) {
    const auto& v = ga::find_record(records, "meta.model.config").values;
    if (v.size() != 11 && v.size() != 12) throw DataError("model checkpoint: malformed config record");
    ModelConfig c;
    c.downsample_ratio = v[0];
    c.blocks = std::size_t(v[1]);
    c.heads = std::size_t(v[2]);
    c.channels = std::size_t(v[3]);
    c.mlp_hidden = std::size_t(v[4]);
    c.message_hidden = std::size_t(v[5]);
    c.interp_hidden = std::size_t(v[6]);
    c.t_min = v[7];
    c.t_max = v[8];
    c.length_scale = v[9];
    c.seed = std::uint64_t(v[10]);
    c.dt_scaled_output = v.size() == 12 && v[11] != 0.0;  // older checkpoints predate the flag
    GrowthModel m(c);
    ga::load_records(m.params_, records);
    for (const auto& p : m.params_) {
      bool present = false;
      for (const auto& r : records) present = present || r.name == p.name;
      if (!present) throw DataError("model checkpoint: missing parameter " + p.name);
    }
    m.stats = Standardizer::from_vector(ga::find_record(records, "meta.model.standardizer").values);
    return m;
  }

 private:
  ModelConfig cfg_;
  ga::ParamSet params_;
  ga::GatedMlp message_;
  std::vector<ga::GatrBlock> blocks_;
  ga::GatedMlp interp_;
};

// Coarse vertices, clusters and interpolation stencils of one mesh.
struct Tokenization {
  std::vector<std::size_t> coarse;
  surface::Clustering clusters;
  std::vector<std::size_t> neighbors;  // 3 (or fewer, if m < 3) per fine vertex, into coarse
  std::vector<double> weights;
  std::size_t stencil = 3;
};

// Inverse-distance weights over the k nearest coarse vertices; a fine
// vertex sitting on a coarse vertex copies it.
inline void interpolation_stencil(const std::vector<surface::Vec3>& points, Tokenization& tk) {
  const std::size_t m = tk.coarse.size();
  tk.stencil = std::min<std::size_t>(3, m);
  tk.neighbors.assign(points.size() * tk.stencil, 0);
  tk.weights.assign(points.size() * tk.stencil, 0.0);
  std::vector<std::pair<double, std::size_t>> d(m);
  for (std::size_t v = 0; v < points.size(); ++v) {
    for (std::size_t k = 0; k < m; ++k) d[k] = {(points[tk.coarse[k]] - points[v]).norm(), k};
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(tk.stencil), d.end(),
                      [&](const auto& a, const auto& b) {
                        return a.first != b.first ? a.first < b.first : tk.coarse[a.second] < tk.coarse[b.second];
                      });
    double total = 0.0;
    for (std::size_t j = 0; j < tk.stencil; ++j) {
      tk.neighbors[v * tk.stencil + j] = d[j].second;
      if (d[0].first == 0.0) {
        tk.weights[v * tk.stencil + j] = j == 0 ? 1.0 : 0.0;
      } else {
        tk.weights[v * tk.stencil + j] = 1.0 / d[j].first;
      }
      total += tk.weights[v * tk.stencil + j];
    }
    for (std::size_t j = 0; j < tk.stencil; ++j) tk.weights[v * tk.stencil + j] /= total;
  }
}

// Sampling starts at the vertex farthest from the centroid, which keeps the
// token set independent of rigid motions and of vertex order.
inline Tokenization make_tokenization(const surface::TriMesh& mesh, double ratio) {
  if (mesh.empty()) throw InvalidArgument("tokenize: empty mesh");
  surface::Vec3 centroid = surface::Vec3::Zero();
  for (const auto& v : mesh.vertices) centroid += v;
  centroid /= static_cast<double>(mesh.size());
  std::size_t start = 0;
  for (std::size_t i = 1; i < mesh.size(); ++i) {
    if ((mesh.vertices[i] - centroid).squaredNorm() > (mesh.vertices[start] - centroid).squaredNorm()) start = i;
  }
  Tokenization tk;
  tk.coarse = surface::farthest_point_sample(mesh.vertices, surface::sample_count(mesh.size(), ratio), start);
  tk.clusters = surface::cluster_assign(mesh.vertices, tk.coarse);
  interpolation_stencil(mesh.vertices, tk);
  return tk;
}

// Message per fine vertex from its features and the translation to its
// cluster center, averaged per cluster.
inline ga::Var tokenize(ga::Graph& g, const GrowthModel& gm, ga::Var x0, const surface::TriMesh& mesh,
                        const Tokenization& tk) {
  const std::size_t n = mesh.size();
  ga::MVTensor rel(n, 1);
  for (std::size_t v = 0; v < n; ++v) {
    const auto& p = mesh.vertices[tk.coarse[tk.clusters.assignment[v]]];
    rel.set(v, 0, ga::embed_translation((p - mesh.vertices[v]) / gm.config().length_scale));
  }
  ga::Var msg = ga::forward(g, gm.message(), ga::concat_channels(x0, ga::as_var(g, rel)));
  return ga::cluster_mean(msg, tk.clusters.assignment, tk.coarse.size());
}

inline ga::Var interpolate_up(ga::Graph& g, const GrowthModel& gm, ga::Var coarse_out, ga::Var x0,
                              const Tokenization& tk) {
  ga::Var up = ga::gather_weighted(coarse_out, tk.neighbors, tk.weights, tk.stencil);
  return ga::forward(g, gm.interp(), ga::concat_channels(up, x0));
}

// Displacement field (rows x 3, mm) on the tape.
inline ga::Var forward(ga::Graph& g, const GrowthModel& gm, const surface::VascularModel& model, double dt,
                       const Tokenization& tk) {
  const ga::MVTensor x0t = build_features(model, dt, gm.stats, gm.config().length_scale);
  ga::Var x0 = ga::as_var(g, x0t);
  ga::Var h = tokenize(g, gm, x0, model.mesh, tk);
  for (const auto& b : gm.blocks()) h = ga::forward(g, b, h);
  ga::Var out = interpolate_up(g, gm, h, x0, tk);
  const double gain = gm.config().length_scale * (gm.config().dt_scaled_output ? dt : 1.0);
  return ga::scale(ga::vector_readout(out, 0), gain);
}

inline Tokenization tokenization_for(const GrowthModel& gm, const surface::TriMesh& mesh) {
  return make_tokenization(mesh, gm.config().downsample_ratio);
}

inline bool in_distribution(const GrowthModel& gm, double dt) {
  return dt >= gm.config().t_min - 1e-12 && dt <= gm.config().t_max + 1e-12;
}

inline std::vector<surface::Vec3> predict(const GrowthModel& gm, const surface::VascularModel& model, double dt) {
  ga::Graph g(gm.params());
  const auto tk = tokenization_for(gm, model.mesh);
  const ga::Var y = forward(g, gm, model, dt, tk);
  const auto& v = y.value();
  std::vector<surface::Vec3> out(model.mesh.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = surface::Vec3(v[3 * i], v[3 * i + 1], v[3 * i + 2]);
  return out;
}

inline surface::TriMesh deform(const surface::TriMesh& mesh, const std::vector<surface::Vec3>& disp) {
  if (disp.size() != mesh.size()) throw InvalidArgument("deform: field size mismatch");
  surface::TriMesh out = mesh;
  for (std::size_t i = 0; i < out.size(); ++i) out.vertices[i] += disp[i];
  surface::compute_vertex_normals(out);
  return out;
}

// Chamfer distance between {base[i] + disp[i] : i in subset} and a fixed
// target point set, with its gradient with respect to disp.
inline ga::Var chamfer_loss(ga::Var disp, const std::vector<surface::Vec3>& base,
                            const std::vector<std::size_t>& subset, const surface::PointIndex& target) {
  ga::Tape& tape = *disp.tape;
  if (disp.shape() != ga::Shape{base.size(), 3}) throw InvalidArgument("chamfer_loss: displacement shape mismatch");
  if (subset.empty() || target.size() == 0) throw InvalidArgument("chamfer_loss: empty point set");
  const auto& dv = disp.value();
  std::vector<surface::Vec3> p(subset.size());
  for (std::size_t k = 0; k < subset.size(); ++k) {
    const std::size_t i = subset[k];
    p[k] = base[i] + surface::Vec3(dv[3 * i], dv[3 * i + 1], dv[3 * i + 2]);
  }
  const surface::PointIndex pi(p);
  const double np = static_cast<double>(p.size()), nq = static_cast<double>(target.size());
  // Per-point unit directions scaled by their weight in the loss.
  std::vector<surface::Vec3> dir(p.size(), surface::Vec3::Zero());
  double fwd = 0.0, bwd = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const auto hit = target.nearest(p[k]);
    const double d = std::sqrt(hit.squared_distance);
    fwd += d;
    if (d > 0.0) dir[k] += (p[k] - target.points()[hit.index]) / (d * np);
  }
  for (const auto& q : target.points()) {
    const auto hit = pi.nearest(q);
    const double d = std::sqrt(hit.squared_distance);
    bwd += d;
    if (d > 0.0) dir[hit.index] += (p[hit.index] - q) / (d * nq);
  }
  ga::Var result = tape.record({fwd / np + bwd / nq}, ga::Shape{1, 1}, {});
  const std::size_t rid = result.id;
  tape.set_backward(result, [disp, subset, dir = std::move(dir), rid](ga::Tape& t) {
    const double gr = t.grad(ga::Var{&t, rid})[0];
    auto& dx = t.grad(disp);
    for (std::size_t k = 0; k < subset.size(); ++k) {
      for (int d = 0; d < 3; ++d) dx[3 * subset[k] + d] += gr * dir[k][d];
    }
  });
  return result;
}

}  // namespace aaa::model
