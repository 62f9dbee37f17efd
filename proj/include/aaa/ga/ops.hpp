#pragma once

// Differentiable equivariant operations on multivector tensors.
//
// A multivector tensor node has shape {rows = tokens, cols = 16 * channels}.

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "aaa/ga/multivector.hpp"
#include "aaa/ga/tape.hpp"

namespace aaa::ga {

// Number of learned coefficients per (output, input) channel pair of an
// equivariant linear map: five grade projections plus four maps
// x -> e0 <x>_k for k = 0..3.
inline constexpr int kEquiBasis = 9;

namespace detail {

struct E0Term {
  int src;
  int dst;
  int sign;
  int weight;
};

constexpr std::array<E0Term, 8> make_e0_terms() {
  std::array<E0Term, 8> terms{};
  int n = 0;
  for (int s = 0; s < kComponents; ++s) {
    if (has_e0(s)) continue;
    const auto& e = kCayley[slot::kE0][s];
    terms[n++] = {s, e.slot, e.sign, 5 + kGrade[s]};
  }
  return terms;
}

inline constexpr auto kE0Terms = make_e0_terms();

constexpr std::array<int, 8> make_euclidean_slots() {
  std::array<int, 8> out{};
  int n = 0;
  for (int s = 0; s < kComponents; ++s) {
    if (!has_e0(s)) out[n++] = s;
  }
  return out;
}

inline constexpr auto kEuclideanSlots = make_euclidean_slots();

inline std::size_t channels_of(const Shape& s) {
  if (s.cols % kComponents != 0) throw InvalidArgument("not a multivector tensor");
  return s.cols / kComponents;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace detail

// y[o] = sum_i sum_k w[o][i][k] B_k(x[i]) + bias[o] (scalar part only).
// w has out * in * 9 entries, bias has out entries.
namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Slots of one grade are contiguous, as are the sources of each e0 map, so
// every basis map is a single product over a block of slot-major rows.
struct SlotRange {
  int begin;
  int count;
};

constexpr std::array<SlotRange, kEquiBasis> make_basis_sources() {
  std::array<SlotRange, kEquiBasis> r{};
  for (int k = 0; k < kEquiBasis; ++k) r[k] = {kComponents, 0};
  for (int s = 0; s < kComponents; ++s) {
    auto& g = r[kGrade[s]];
    g.begin = std::min(g.begin, s), ++g.count;
  }
  for (const auto& t : kE0Terms) {
    auto& g = r[t.weight];
    g.begin = std::min(g.begin, t.src), ++g.count;
  }
  return r;
}

inline constexpr auto kBasisSources = make_basis_sources();

constexpr bool basis_sources_contiguous() {
  for (int s = 0; s < kComponents; ++s) {
    const auto& g = kBasisSources[kGrade[s]];
    if (s < g.begin || s >= g.begin + g.count) return false;
  }
  for (const auto& t : kE0Terms) {
    const auto& g = kBasisSources[t.weight];
    if (t.src < g.begin || t.src >= g.begin + g.count) return false;
  }
  return true;
}
static_assert(basis_sources_contiguous());

// [row][channel][slot] -> slot-major (16 rows) x channels.
inline RowMat split_slots(const std::vector<double>& v, std::size_t n, std::size_t c) {
  RowMat out(static_cast<Eigen::Index>(kComponents * n), static_cast<Eigen::Index>(c));
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < c; ++i) {
      const double* src = &v[(r * c + i) * kComponents];
      for (int s = 0; s < kComponents; ++s) out(Eigen::Index(s * n + r), Eigen::Index(i)) = src[s];
    }
  }
  return out;
}

inline void merge_slots(const RowMat& m, std::size_t n, std::vector<double>& v) {
  const auto c = static_cast<std::size_t>(m.cols());
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < c; ++i) {
      double* dst = &v[(r * c + i) * kComponents];
      for (int s = 0; s < kComponents; ++s) dst[s] += m(Eigen::Index(s * n + r), Eigen::Index(i));
    }
  }
}

// Basis coefficient k of the weight tensor as an out x in matrix.
inline std::array<RowMat, kEquiBasis> split_weights(const std::vector<double>& w, std::size_t out, std::size_t in) {
  std::array<RowMat, kEquiBasis> m;
  for (auto& x : m) x.resize(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
  for (std::size_t o = 0; o < out; ++o) {
    for (std::size_t i = 0; i < in; ++i) {
      for (int k = 0; k < kEquiBasis; ++k) m[k](Eigen::Index(o), Eigen::Index(i)) = w[(o * in + i) * kEquiBasis + k];
    }
  }
  return m;
}

inline auto slot_rows(RowMat& m, int slot, int count, std::size_t n) {
  return m.middleRows(Eigen::Index(slot * n), Eigen::Index(count * n));
}
inline auto slot_rows(const RowMat& m, int slot, int count, std::size_t n) {
  return m.middleRows(Eigen::Index(slot * n), Eigen::Index(count * n));
}

}  // namespace detail

inline Var equi_linear(Var x, Var w, Var bias, std::size_t in, std::size_t out) {
  using detail::kBasisSources;
  using detail::slot_rows;
  Tape& tape = *x.tape;
  const Shape xs = x.shape();
  if (detail::channels_of(xs) != in) throw InvalidArgument("equi_linear: input channel mismatch");
  if (w.value().size() != out * in * kEquiBasis || bias.value().size() != out) {
    throw InvalidArgument("equi_linear: parameter shape mismatch");
  }
  const std::size_t n = xs.rows;
  const auto X = detail::split_slots(x.value(), n, in);
  const auto W = detail::split_weights(w.value(), out, in);
  detail::RowMat Y(Eigen::Index(kComponents * n), Eigen::Index(out));
  for (int g = 0; g < 5; ++g) {
    const auto& r = kBasisSources[g];
    slot_rows(Y, r.begin, r.count, n).noalias() = slot_rows(X, r.begin, r.count, n) * W[g].transpose();
  }
  for (int k = 5; k < kEquiBasis; ++k) {
    const auto& r = kBasisSources[k];
    const detail::RowMat P = slot_rows(X, r.begin, r.count, n) * W[k].transpose();
    for (const auto& t : detail::kE0Terms) {
      if (t.weight == k) slot_rows(Y, t.dst, 1, n) += double(t.sign) * slot_rows(P, t.src - r.begin, 1, n);
    }
  }
  const Eigen::Map<const Eigen::RowVectorXd> bv(bias.value().data(), Eigen::Index(out));
  slot_rows(Y, 0, 1, n).rowwise() += bv;
  std::vector<double> y(n * out * kComponents, 0.0);
  detail::merge_slots(Y, n, y);

  Var result = tape.record(std::move(y), Shape{n, out * kComponents}, {});
  const std::size_t rid = result.id;
  // The closure is attached after creation so it can refer to its own node.
  auto back = [x, w, bias, in, out, n, rid](Tape& t) {
    const auto dY = detail::split_slots(t.grad(Var{&t, rid}), n, out);
    const auto X = detail::split_slots(x.value(), n, in);
    const auto W = detail::split_weights(w.value(), out, in);
    detail::RowMat dX(Eigen::Index(kComponents * n), Eigen::Index(in));
    std::array<detail::RowMat, kEquiBasis> dW;
    for (int g = 0; g < 5; ++g) {
      const auto& r = kBasisSources[g];
      const auto dy = slot_rows(dY, r.begin, r.count, n);
      slot_rows(dX, r.begin, r.count, n).noalias() = dy * W[g];
      dW[g].noalias() = dy.transpose() * slot_rows(X, r.begin, r.count, n);
    }
    for (int k = 5; k < kEquiBasis; ++k) {
      const auto& r = kBasisSources[k];
      detail::RowMat Q(Eigen::Index(r.count * n), Eigen::Index(out));
      for (const auto& e : detail::kE0Terms) {
        if (e.weight == k) slot_rows(Q, e.src - r.begin, 1, n) = double(e.sign) * slot_rows(dY, e.dst, 1, n);
      }
      slot_rows(dX, r.begin, r.count, n).noalias() += Q * W[k];
      dW[k].noalias() = Q.transpose() * slot_rows(X, r.begin, r.count, n);
    }
    detail::merge_slots(dX, n, t.grad(x));
    auto& dw = t.grad(w);
    for (std::size_t o = 0; o < out; ++o) {
      for (std::size_t i = 0; i < in; ++i) {
        for (int k = 0; k < kEquiBasis; ++k) dw[(o * in + i) * kEquiBasis + k] += dW[k](Eigen::Index(o), Eigen::Index(i));
      }
    }
    auto& db = t.grad(bias);
    const Eigen::RowVectorXd colsum = slot_rows(dY, 0, 1, n).colwise().sum();
    for (std::size_t o = 0; o < out; ++o) db[o] += colsum[Eigen::Index(o)];
  };
  tape.set_backward(result, std::move(back));
  return result;
}

// Per-token normalisation by the invariant norm summed over channels. Tokens
// with vanishing norm map to zero.
inline Var layer_norm(Var x) {
  Tape& tape = *x.tape;
  const Shape xs = x.shape();
  const std::size_t n = xs.rows;
  const std::size_t cols = xs.cols;
  detail::channels_of(xs);
  const auto& xv = x.value();
  std::vector<double> y(xv.size(), 0.0);
  std::vector<double> inv_norm(n, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    const double* xr = &xv[r * cols];
    double sq = 0.0;
    for (std::size_t c = 0; c < cols; c += kComponents) {
      for (int s : detail::kEuclideanSlots) sq += xr[c + s] * xr[c + s];
    }
    if (sq <= 1e-24) continue;
    inv_norm[r] = 1.0 / std::sqrt(sq);
    for (std::size_t k = 0; k < cols; ++k) y[r * cols + k] = xr[k] * inv_norm[r];
  }
  Var result = tape.record(std::move(y), xs, {});
  const std::size_t rid = result.id;
  tape.set_backward(result, [x, n, cols, rid, inv_norm = std::move(inv_norm)](Tape& t) {
    const auto& dy = t.grad(Var{&t, rid});
    const auto& yv = t.value(Var{&t, rid});
    auto& dx = t.grad(x);
    for (std::size_t r = 0; r < n; ++r) {
      if (inv_norm[r] == 0.0) continue;
      const double* gr = &dy[r * cols];
      const double* yr = &yv[r * cols];
      double dot = 0.0;
      for (std::size_t k = 0; k < cols; ++k) dot += gr[k] * yr[k];
      for (std::size_t k = 0; k < cols; ++k) {
        const bool euclid = !has_e0(static_cast<int>(k % kComponents));
        dx[r * cols + k] += inv_norm[r] * (gr[k] - (euclid ? dot * yr[k] : 0.0));
      }
    }
  });
  return result;
}

// Scalar-gated nonlinearity: y = sigmoid(x_s) x per channel.
inline Var gate(Var x) {
  Tape& tape = *x.tape;
  const Shape xs = x.shape();
  const std::size_t blocks = xs.size() / kComponents;
  detail::channels_of(xs);
  const auto& xv = x.value();
  std::vector<double> y(xv.size());
  std::vector<double> sig(blocks);
  for (std::size_t b = 0; b < blocks; ++b) {
    sig[b] = detail::sigmoid(xv[b * kComponents]);
    for (int s = 0; s < kComponents; ++s) y[b * kComponents + s] = sig[b] * xv[b * kComponents + s];
  }
  Var result = tape.record(std::move(y), xs, {});
  const std::size_t rid = result.id;
  tape.set_backward(result, [x, blocks, rid, sig = std::move(sig)](Tape& t) {
    const auto& dy = t.grad(Var{&t, rid});
    const auto& xv = x.value();
    auto& dx = t.grad(x);
    for (std::size_t b = 0; b < blocks; ++b) {
      const double* g = &dy[b * kComponents];
      const double* xb = &xv[b * kComponents];
      double dot = 0.0;
      for (int s = 0; s < kComponents; ++s) {
        dx[b * kComponents + s] += sig[b] * g[s];
        dot += g[s] * xb[s];
      }
      dx[b * kComponents] += sig[b] * (1.0 - sig[b]) * dot;
    }
  });
  return result;
}

inline Var add(Var a, Var b) {
  Tape& tape = *a.tape;
  if (!(a.shape() == b.shape())) throw InvalidArgument("add: shape mismatch");
  std::vector<double> y = a.value();
  const auto& bv = b.value();
  for (std::size_t k = 0; k < y.size(); ++k) y[k] += bv[k];
  Var result = tape.record(std::move(y), a.shape(), {});
  const std::size_t rid = result.id;
  tape.set_backward(result, [a, b, rid](Tape& t) {
    const auto dy = t.grad(Var{&t, rid});
    auto& da = t.grad(a);
    for (std::size_t k = 0; k < dy.size(); ++k) da[k] += dy[k];
    auto& dbv = t.grad(b);
    for (std::size_t k = 0; k < dy.size(); ++k) dbv[k] += dy[k];
  });
  return result;
}

// Same data, new shape.
inline Var reshape(Var a, Shape shape) {
  Tape& tape = *a.tape;
  if (shape.size() != a.value().size()) throw InvalidArgument("reshape: size mismatch");
  Var result = tape.record(a.value(), shape, {});
  const std::size_t rid = result.id;
  tape.set_backward(result, [a, rid](Tape& t) {
    const auto dy = t.grad(Var{&t, rid});
    auto& da = t.grad(a);
    for (std::size_t k = 0; k < dy.size(); ++k) da[k] += dy[k];
  });
  return result;
}

inline Var scale(Var a, double s) {
  Tape& tape = *a.tape;
  std::vector<double> y = a.value();
  for (double& v : y) v *= s;
  Var result = tape.record(std::move(y), a.shape(), {});
  const std::size_t rid = result.id;
  tape.set_backward(result, [a, s, rid](Tape& t) {
    const auto& dy = t.grad(Var{&t, rid});
    auto& da = t.grad(a);
    for (std::size_t k = 0; k < dy.size(); ++k) da[k] += s * dy[k];
  });
  return result;
}

// Sum of scalar nodes with weights.
inline Var weighted_sum(const std::vector<Var>& xs, const std::vector<double>& weights) {
  if (xs.empty() || xs.size() != weights.size()) throw InvalidArgument("weighted_sum: bad arguments");
  Tape& tape = *xs.front().tape;
  double total = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) total += weights[i] * xs[i].value().at(0);
  Var result = tape.record({total}, Shape{1, 1}, {});
  const std::size_t rid = result.id;
  tape.set_backward(result, [xs, weights, rid](Tape& t) {
    const double g = t.grad(Var{&t, rid})[0];
    for (std::size_t i = 0; i < xs.size(); ++i) t.grad(xs[i])[0] += weights[i] * g;
  });
  return result;
}

// Concatenates the channels of two multivector tensors with equal rows.
inline Var concat_channels(Var a, Var b) {
  Tape& tape = *a.tape;
  const Shape as = a.shape(), bs = b.shape();
  if (as.rows != bs.rows) throw InvalidArgument("concat_channels: row mismatch");
  const std::size_t n = as.rows, ca = as.cols, cb = bs.cols;
  std::vector<double> y(n * (ca + cb));
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(&av[r * ca], ca, &y[r * (ca + cb)]);
    std::copy_n(&bv[r * cb], cb, &y[r * (ca + cb) + ca]);
  }
  Var result = tape.record(std::move(y), Shape{n, ca + cb}, {});
  const std::size_t rid = result.id;
  tape.set_backward(result, [a, b, n, ca, cb, rid](Tape& t) {
    const auto dy = t.grad(Var{&t, rid});
    auto& da = t.grad(a);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t k = 0; k < ca; ++k) da[r * ca + k] += dy[r * (ca + cb) + k];
    }
    auto& dbv = t.grad(b);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t k = 0; k < cb; ++k) dbv[r * cb + k] += dy[r * (ca + cb) + ca + k];
    }
  });
  return result;
}

// Multi-head self-attention with invariant-inner-product logits. Channels
// are split evenly over heads; `scale` multiplies the logits. If `weights`
// is given it receives the row-stochastic attention matrices, head-major.
inline Var attention(Var q, Var k, Var v, std::size_t heads, double scale_factor,
                     std::vector<double>* weights = nullptr) {
  Tape& tape = *q.tape;
  const Shape s = q.shape();
  if (!(k.shape() == s) || !(v.shape() == s)) throw InvalidArgument("attention: shape mismatch");
  const std::size_t n = s.rows;
  const std::size_t c = detail::channels_of(s);
  if (heads == 0 || c % heads != 0) throw InvalidArgument("attention: channels not divisible by heads");
  const std::size_t ch = c / heads;
  const std::size_t cols = s.cols;
  const auto& qv = q.value();
  const auto& kv = k.value();
  const auto& vv = v.value();
  std::vector<double> probs(heads * n * n);
  std::vector<double> y(n * cols, 0.0);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t c0 = h * ch * kComponents;
    for (std::size_t a = 0; a < n; ++a) {
      double* pa = &probs[(h * n + a) * n];
      double mx = -1e300;
      for (std::size_t b = 0; b < n; ++b) {
        double dot = 0.0;
        for (std::size_t j = 0; j < ch; ++j) {
          const double* qa = &qv[a * cols + c0 + j * kComponents];
          const double* kb = &kv[b * cols + c0 + j * kComponents];
          for (int sl : detail::kEuclideanSlots) dot += qa[sl] * kb[sl];
        }
        pa[b] = scale_factor * dot;
        mx = std::max(mx, pa[b]);
      }
      double z = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        pa[b] = std::exp(pa[b] - mx);
        z += pa[b];
      }
      for (std::size_t b = 0; b < n; ++b) pa[b] /= z;
      double* ya = &y[a * cols + c0];
      for (std::size_t b = 0; b < n; ++b) {
        const double* vb = &vv[b * cols + c0];
        for (std::size_t kk = 0; kk < ch * kComponents; ++kk) ya[kk] += pa[b] * vb[kk];
      }
    }
  }
  if (weights != nullptr) *weights = probs;
  Var result = tape.record(std::move(y), s, {});
  const std::size_t rid = result.id;
  tape.set_backward(result, [q, k, v, n, heads, ch, cols, scale_factor, rid,
                             probs = std::move(probs)](Tape& t) {
    const auto& dy = t.grad(Var{&t, rid});
    const auto& qv = q.value();
    const auto& kv = k.value();
    const auto& vv = v.value();
    auto& dq = t.grad(q);
    auto& dk = t.grad(k);
    auto& dv = t.grad(v);
    std::vector<double> dp(n);
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t c0 = h * ch * kComponents;
      for (std::size_t a = 0; a < n; ++a) {
        const double* pa = &probs[(h * n + a) * n];
        const double* ga = &dy[a * cols + c0];
        double mean = 0.0;
        for (std::size_t b = 0; b < n; ++b) {
          const double* vb = &vv[b * cols + c0];
          double* gvb = &dv[b * cols + c0];
          double acc = 0.0;
          for (std::size_t kk = 0; kk < ch * kComponents; ++kk) {
            acc += ga[kk] * vb[kk];
            gvb[kk] += pa[b] * ga[kk];
          }
          dp[b] = acc;
          mean += pa[b] * acc;
        }
        for (std::size_t b = 0; b < n; ++b) {
          const double dl = pa[b] * (dp[b] - mean) * scale_factor;
          if (dl == 0.0) continue;
          for (std::size_t j = 0; j < ch; ++j) {
            const std::size_t oa = a * cols + c0 + j * kComponents;
            const std::size_t ob = b * cols + c0 + j * kComponents;
            for (int sl : detail::kEuclideanSlots) {
              dq[oa + sl] += dl * kv[ob + sl];
              dk[ob + sl] += dl * qv[oa + sl];
            }
          }
        }
      }
    }
  });
  return result;
}

// Mean of fine rows per cluster: y[m] = mean_{r : assignment[r] = m} x[r].
inline Var cluster_mean(Var x, const std::vector<std::size_t>& assignment, std::size_t clusters) {
  Tape& tape = *x.tape;
  const Shape xs = x.shape();
  if (assignment.size() != xs.rows) throw InvalidArgument("cluster_mean: assignment size mismatch");
  const std::size_t cols = xs.cols;
  std::vector<double> counts(clusters, 0.0);
  for (std::size_t a : assignment) {
    if (a >= clusters) throw InvalidArgument("cluster_mean: cluster index out of range");
    counts[a] += 1.0;
  }
  const auto& xv = x.value();
  std::vector<double> y(clusters * cols, 0.0);
  for (std::size_t r = 0; r < xs.rows; ++r) {
    const double w = 1.0 / counts[assignment[r]];
    for (std::size_t k = 0; k < cols; ++k) y[assignment[r] * cols + k] += w * xv[r * cols + k];
  }
  Var result = tape.record(std::move(y), Shape{clusters, cols}, {});
  const std::size_t rid = result.id;
  tape.set_backward(result, [x, assignment, counts = std::move(counts), cols, rid](Tape& t) {
    const auto& dy = t.grad(Var{&t, rid});
    auto& dx = t.grad(x);
    for (std::size_t r = 0; r < assignment.size(); ++r) {
      const double w = 1.0 / counts[assignment[r]];
      for (std::size_t k = 0; k < cols; ++k) dx[r * cols + k] += w * dy[assignment[r] * cols + k];
    }
  });
  return result;
}

// y[r] = sum_j weights[r][j] x[neighbors[r][j]] with constant weights.
// `neighbors` and `weights` are row-major with `k` entries per output row.
inline Var gather_weighted(Var x, const std::vector<std::size_t>& neighbors,
                           const std::vector<double>& weights, std::size_t k) {
  Tape& tape = *x.tape;
  const Shape xs = x.shape();
  if (k == 0 || neighbors.size() != weights.size() || neighbors.size() % k != 0) {
    throw InvalidArgument("gather_weighted: bad neighbour table");
  }
  const std::size_t n = neighbors.size() / k;
  const std::size_t cols = xs.cols;
  const auto& xv = x.value();
  std::vector<double> y(n * cols, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t src = neighbors[r * k + j];
      if (src >= xs.rows) throw InvalidArgument("gather_weighted: neighbour out of range");
      const double w = weights[r * k + j];
      for (std::size_t c = 0; c < cols; ++c) y[r * cols + c] += w * xv[src * cols + c];
    }
  }
  Var result = tape.record(std::move(y), Shape{n, cols}, {});
  const std::size_t rid = result.id;
  tape.set_backward(result, [x, neighbors, weights, k, n, cols, rid](Tape& t) {
    const auto& dy = t.grad(Var{&t, rid});
    auto& dx = t.grad(x);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t j = 0; j < k; ++j) {
        const std::size_t src = neighbors[r * k + j];
        const double w = weights[r * k + j];
        for (std::size_t c = 0; c < cols; ++c) dx[src * cols + c] += w * dy[r * cols + c];
      }
    }
  });
  return result;
}

// Euclidean 3-vector read from one channel: twice the translation part of
// e0 * x, i.e. 2 (x_e1, x_e2, x_e3). Output shape {rows, 3}.
inline Var vector_readout(Var x, std::size_t channel) {
  Tape& tape = *x.tape;
  const Shape xs = x.shape();
  const std::size_t c = detail::channels_of(xs);
  if (channel >= c) throw InvalidArgument("vector_readout: channel out of range");
  const std::size_t n = xs.rows;
  const std::size_t cols = xs.cols;
  const std::size_t off = channel * kComponents;
  const auto& xv = x.value();
  std::vector<double> y(n * 3);
  for (std::size_t r = 0; r < n; ++r) {
    for (int d = 0; d < 3; ++d) y[r * 3 + d] = 2.0 * xv[r * cols + off + slot::kE1 + d];
  }
  Var result = tape.record(std::move(y), Shape{n, 3}, {});
  const std::size_t rid = result.id;
  tape.set_backward(result, [x, n, cols, off, rid](Tape& t) {
    const auto& dy = t.grad(Var{&t, rid});
    auto& dx = t.grad(x);
    for (std::size_t r = 0; r < n; ++r) {
      for (int d = 0; d < 3; ++d) dx[r * cols + off + slot::kE1 + d] += 2.0 * dy[r * 3 + d];
    }
  });
  return result;
}

// x + c for a constant array c of the same size.
inline Var add_constant(Var x, const std::vector<double>& c) {
  Tape& tape = *x.tape;
  if (c.size() != x.value().size()) throw InvalidArgument("add_constant: size mismatch");
  std::vector<double> y = x.value();
  for (std::size_t k = 0; k < y.size(); ++k) y[k] += c[k];
  Var result = tape.record(std::move(y), x.shape(), {});
  const std::size_t rid = result.id;
  tape.set_backward(result, [x, rid](Tape& t) {
    const auto dy = t.grad(Var{&t, rid});
    auto& dx = t.grad(x);
    for (std::size_t k = 0; k < dy.size(); ++k) dx[k] += dy[k];
  });
  return result;
}

// Sum of squares of all entries (test helper loss).
inline Var sum_squares(Var x) {
  Tape& tape = *x.tape;
  double s = 0.0;
  for (double v : x.value()) s += v * v;
  Var result = tape.record({s}, Shape{1, 1}, {});
  const std::size_t rid = result.id;
  tape.set_backward(result, [x, rid](Tape& t) {
    const double g = t.grad(Var{&t, rid})[0];
    const auto& xv = x.value();
    auto& dx = t.grad(x);
    for (std::size_t k = 0; k < xv.size(); ++k) dx[k] += 2.0 * g * xv[k];
  });
  return result;
}

// <x, c> for a constant array c (test helper loss).
inline Var dot_constant(Var x, const std::vector<double>& c) {
  Tape& tape = *x.tape;
  if (c.size() != x.value().size()) throw InvalidArgument("dot_constant: size mismatch");
  double s = 0.0;
  const auto& xv = x.value();
  for (std::size_t k = 0; k < c.size(); ++k) s += xv[k] * c[k];
  Var result = tape.record({s}, Shape{1, 1}, {});
  const std::size_t rid = result.id;
  tape.set_backward(result, [x, c, rid](Tape& t) {
    const double g = t.grad(Var{&t, rid})[0];
    auto& dx = t.grad(x);
    for (std::size_t k = 0; k < c.size(); ++k) dx[k] += g * c[k];
  });
  return result;
}

}  // namespace aaa::ga
