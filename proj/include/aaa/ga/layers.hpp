#pragma once

// Equivariant layers built from ops.hpp: linear maps, the gated MLP and the
// transformer block
//
//   A = X + proj(Concat_h Softmax(q_h(X) k_h(X)^T / sqrt(d / 2)) v_h(X))
//   X' = A + MLP(A)
//
// where q, k, v are a shared layer norm followed by learned linear maps and
// d = 16 * channels.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "aaa/ga/ops.hpp"
#include "aaa/ga/params.hpp"
#include "aaa/ga/tape.hpp"
#include "aaa/ga/tensor.hpp"

namespace aaa::ga {

struct EquiLinear {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t weight = 0;  // index into ParamSet, out * in * 9 values
  std::size_t bias = 0;    // index into ParamSet, out values
};

inline EquiLinear make_equi_linear(ParamSet& params, const std::string& name, std::size_t in,
                                   std::size_t out, std::mt19937_64& rng, double gain = 1.0) {
  if (in == 0 || out == 0) throw InvalidArgument("equi_linear: channel counts must be positive");
  EquiLinear l{in, out, params.add(name + ".weight", out * in * kEquiBasis), params.add(name + ".bias", out)};
  const double a = gain / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> u(-a, a);
  auto& w = params[l.weight].value;
  for (std::size_t k = 0; k < w.size(); ++k) {
    w[k] = (k % kEquiBasis < 5) ? u(rng) : 0.5 * u(rng);
  }
  return l;
}

inline void zero_init(ParamSet& params, const EquiLinear& l) {
  std::fill(params[l.weight].value.begin(), params[l.weight].value.end(), 0.0);
  std::fill(params[l.bias].value.begin(), params[l.bias].value.end(), 0.0);
}

// Sets the map to copy input channel i to output channel i for
// i < min(in, out); everything else zero.
inline void identity_init(ParamSet& params, const EquiLinear& l) {
  zero_init(params, l);
  auto& w = params[l.weight].value;
  for (std::size_t i = 0; i < std::min(l.in, l.out); ++i) {
    for (int g = 0; g < 5; ++g) w[(i * l.in + i) * kEquiBasis + g] = 1.0;
  }
}

inline Var forward(Graph& g, const EquiLinear& l, Var x) {
  return equi_linear(x, g.param(l.weight), g.param(l.bias), l.in, l.out);
}

// hidden -> gate -> output, plus a linear skip branch from the input.
struct GatedMlp {
  EquiLinear hidden;
  EquiLinear output;
  EquiLinear skip;
};

inline GatedMlp make_gated_mlp(ParamSet& params, const std::string& name, std::size_t in,
                               std::size_t hidden, std::size_t out, std::mt19937_64& rng) {
  GatedMlp m;
  m.hidden = make_equi_linear(params, name + ".hidden", in, hidden, rng);
  m.output = make_equi_linear(params, name + ".output", hidden, out, rng);
  m.skip = make_equi_linear(params, name + ".skip", in, out, rng, 0.5);
  return m;
}

inline Var forward(Graph& g, const GatedMlp& m, Var x) {
  return add(forward(g, m.output, gate(forward(g, m.hidden, x))), forward(g, m.skip, x));
}

struct GatrBlock {
  std::size_t channels = 0;
  std::size_t heads = 1;
  EquiLinear query, key, value, proj;
  EquiLinear mlp_in, mlp_out;
};

inline GatrBlock make_gatr_block(ParamSet& params, const std::string& name, std::size_t channels,
                                 std::size_t heads, std::size_t mlp_hidden, std::mt19937_64& rng) {
  if (heads == 0 || channels % heads != 0) {
    throw InvalidArgument("gatr_block: channels must be divisible by heads");
  }
  GatrBlock b;
  b.channels = channels;
  b.heads = heads;
  b.query = make_equi_linear(params, name + ".query", channels, channels, rng);
  b.key = make_equi_linear(params, name + ".key", channels, channels, rng);
  b.value = make_equi_linear(params, name + ".value", channels, channels, rng);
  b.proj = make_equi_linear(params, name + ".proj", channels, channels, rng, 0.5);
  b.mlp_in = make_equi_linear(params, name + ".mlp_in", channels, mlp_hidden, rng);
  b.mlp_out = make_equi_linear(params, name + ".mlp_out", mlp_hidden, channels, rng, 0.5);
  return b;
}

inline double attention_scale(std::size_t channels) {
  const double d = static_cast<double>(kComponents * channels);
  return 1.0 / std::sqrt(d / 2.0);
}

// proj(Concat_h Softmax(...) v_h) without the residual.
inline Var attention_update(Graph& g, const GatrBlock& b, Var x, std::vector<double>* weights = nullptr) {
  Var normed = layer_norm(x);
  Var q = forward(g, b.query, normed);
  Var k = forward(g, b.key, normed);
  Var v = forward(g, b.value, normed);
  return forward(g, b.proj, attention(q, k, v, b.heads, attention_scale(b.channels), weights));
}

inline Var geometric_attention(Graph& g, const GatrBlock& b, Var x, std::vector<double>* weights = nullptr) {
  return add(x, attention_update(g, b, x, weights));
}

inline Var block_mlp(Graph& g, const GatrBlock& b, Var x) {
  return forward(g, b.mlp_out, gate(forward(g, b.mlp_in, x)));
}

inline Var forward(Graph& g, const GatrBlock& b, Var x) {
  Var a = geometric_attention(g, b, x);
  return add(a, block_mlp(g, b, a));
}

// ---------------------------------------------------------------------------
// Value-level entry points (no gradients).

inline Var as_var(Graph& g, const MVTensor& x) {
  return g.constant(x.data(), Shape{x.rows(), x.reals_per_row()});
}

inline MVTensor as_tensor(Var v) {
  const Shape s = v.shape();
  return MVTensor(s.rows, s.cols / kComponents, v.value());
}

inline MVTensor equi_linear(const ParamSet& params, const EquiLinear& l, const MVTensor& x) {
  Graph g(params);
  return as_tensor(forward(g, l, as_var(g, x)));
}

inline MVTensor mv_layer_norm(const MVTensor& x) {
  if (x.rows() == 0) throw InvalidArgument("mv_layer_norm: empty tensor");
  ParamSet none;
  Graph g(none);
  return as_tensor(layer_norm(as_var(g, x)));
}

inline MVTensor geometric_attention(const ParamSet& params, const GatrBlock& b, const MVTensor& x,
                                    std::vector<double>* weights = nullptr) {
  Graph g(params);
  return as_tensor(geometric_attention(g, b, as_var(g, x), weights));
}

inline MVTensor gatr_block(const ParamSet& params, const GatrBlock& b, const MVTensor& x) {
  Graph g(params);
  return as_tensor(forward(g, b, as_var(g, x)));
}

inline MVTensor gated_mlp(const ParamSet& params, const GatedMlp& m, const MVTensor& x) {
  Graph g(params);
  return as_tensor(forward(g, m, as_var(g, x)));
}

}  // namespace aaa::ga
