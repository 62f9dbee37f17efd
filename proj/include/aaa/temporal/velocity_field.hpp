#pragma once

// Periodic-activation coordinate network f(x, t) -> velocity (mm / year).
// Inputs are normalised to the scene box and the patient's time span:
//
//   z0 = ((x - center) / half_extent, 2 (t - t_lo) / (t_hi - t_lo) - 1)
//   z_l = sin(omega_l (W_l z_{l-1} + b_l)),  omega_1 = omega0, omega_l = 1
//   f = W_out z_L + b_out
//
// The output layer starts at zero so a fresh field is the identity flow.

#include <Eigen/Core>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "aaa/error.hpp"
#include "aaa/ga/params.hpp"

namespace aaa::temporal {

using Points = Eigen::Matrix3Xd;  // one column per point

struct FieldConfig {
  std::size_t hidden_layers = 3;
  std::size_t width = 128;
  double omega0 = 10.0;
  double steps_per_year = 16.0;  // RK4 grid used when advecting with this field
};

class VelocityField {
 public:
  VelocityField() = default;

  // `lo`/`hi` bound the scene box, [t_lo, t_hi] the time span.
  VelocityField(const FieldConfig& cfg, const Eigen::Vector3d& lo, const Eigen::Vector3d& hi, double t_lo,
                double t_hi, std::uint64_t seed)
      : cfg_(cfg), center_(0.5 * (lo + hi)), t_lo_(t_lo), t_hi_(t_hi) {
    if (cfg.hidden_layers == 0 || cfg.width == 0) throw InvalidArgument("velocity field: empty architecture");
    if (!(cfg.steps_per_year > 0.0)) throw InvalidArgument("velocity field: steps_per_year must be positive");
    if (!(t_hi > t_lo)) throw InvalidArgument("velocity field: empty time span");
    half_extent_ = std::max(0.5 * (hi - lo).maxCoeff(), 1e-9);
    std::mt19937_64 rng(seed);
    std::size_t in = 4;
    for (std::size_t l = 0; l < cfg.hidden_layers; ++l) {
      const auto w = params_.add("field.w" + std::to_string(l), cfg.width * in);
      const auto b = params_.add("field.b" + std::to_string(l), cfg.width);
      const double bound = l == 0 ? 1.0 / static_cast<double>(in) : std::sqrt(6.0 / static_cast<double>(in));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (double& v : params_[w].value) v = u(rng);
      for (double& v : params_[b].value) v = u(rng);
      in = cfg.width;
    }
    params_.add("field.w_out", 3 * cfg.width);
    params_.add("field.b_out", 3);
    store_meta();
  }

  const FieldConfig& config() const { return cfg_; }
  ga::ParamSet& params() { return params_; }
  const ga::ParamSet& params() const { return params_; }
  double t_lo() const { return t_lo_; }
  double t_hi() const { return t_hi_; }

  struct Cache {
    Eigen::MatrixXd input;                  // 4 x n
    std::vector<Eigen::MatrixXd> pre;       // omega * (W z + b), per hidden layer
    std::vector<Eigen::MatrixXd> act;       // sin(pre)
  };

  Points operator()(const Points& x, double t) const {
    Cache c;
    return forward(x, t, c);
  }

  Points forward(const Points& x, double t, Cache& c) const {
    const auto n = x.cols();
    c.input.resize(4, n);
    c.input.topRows<3>() = (x.colwise() - center_) / half_extent_;
    c.input.row(3).setConstant(2.0 * (t - t_lo_) / (t_hi_ - t_lo_) - 1.0);
    c.pre.resize(cfg_.hidden_layers);
    c.act.resize(cfg_.hidden_layers);
    const Eigen::MatrixXd* z = &c.input;
    for (std::size_t l = 0; l < cfg_.hidden_layers; ++l) {
      const double omega = l == 0 ? cfg_.omega0 : 1.0;
      c.pre[l] = omega * ((weight(l) * *z).colwise() + bias(l));
      c.act[l] = c.pre[l].array().sin().matrix();
      z = &c.act[l];
    }
    return (out_weight() * *z).colwise() + out_bias();
  }

  // Vector-Jacobian product: given dL/df (3 x n) for the cached evaluation,
  // accumulates parameter gradients and returns dL/dx.
  Points backward(const Cache& c, const Points& grad_out) {
    const std::size_t L = cfg_.hidden_layers;
    // products land in aligned temporaries first; the grad buffers are plain
    // std::vector storage and Eigen's kernels peel by address
    const Eigen::MatrixXd gw = grad_out * c.act[L - 1].transpose();
    const Eigen::VectorXd gb = grad_out.rowwise().sum();
    grad_map(2 * L, 3, cfg_.width) += gw;
    grad_vec(2 * L + 1, 3) += gb;
    Eigen::MatrixXd g = out_weight().transpose() * grad_out;
    for (std::size_t l = L; l-- > 0;) {
      const double omega = l == 0 ? cfg_.omega0 : 1.0;
      const Eigen::MatrixXd ga = (g.array() * c.pre[l].array().cos() * omega).matrix();
      const Eigen::MatrixXd& z = l == 0 ? c.input : c.act[l - 1];
      const Eigen::MatrixXd gw = ga * z.transpose();
      const Eigen::VectorXd gb = ga.rowwise().sum();
      grad_map(2 * l, cfg_.width, static_cast<std::size_t>(z.rows())) += gw;
      grad_vec(2 * l + 1, cfg_.width) += gb;
      g = weight(l).transpose() * ga;
    }
    return g.topRows<3>() / half_extent_;
  }

  static VelocityField from_records(const std::vector<ga::CheckpointRecord>& records) {
    ga::ParamSet p;
    for (const auto& r : records) p[p.add(r.name, r.values.size())].value = r.values;
    return from_params(std::move(p));
  }

  // Restores a field from checkpoint records written by params().
  static VelocityField from_params(ga::ParamSet params) {
    VelocityField f;
    auto meta = [&](const std::string& name) -> const std::vector<double>& { return params[params.find(name)].value; };
    const auto& arch = meta("meta.field.config");
    const auto& norm = meta("meta.field.norm");
    if (arch.size() != 4 || norm.size() != 6) throw DataError("velocity field checkpoint: malformed metadata");
    f.cfg_ = {static_cast<std::size_t>(arch[0]), static_cast<std::size_t>(arch[1]), arch[2], arch[3]};
    f.center_ = Eigen::Vector3d(norm[0], norm[1], norm[2]);
    f.half_extent_ = norm[3];
    f.t_lo_ = norm[4];
    f.t_hi_ = norm[5];
    f.params_ = std::move(params);
    std::size_t in = 4;
    for (std::size_t l = 0; l < f.cfg_.hidden_layers; ++l) {
      f.check(2 * l, f.cfg_.width * in);
      f.check(2 * l + 1, f.cfg_.width);
      in = f.cfg_.width;
    }
    f.check(2 * f.cfg_.hidden_layers, 3 * f.cfg_.width);
    f.check(2 * f.cfg_.hidden_layers + 1, 3);
    return f;
  }

 private:
  using RowMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using MutRowMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  void store_meta() {
    const auto a = params_.add("meta.field.config", 4);
    params_[a].value = {static_cast<double>(cfg_.hidden_layers), static_cast<double>(cfg_.width), cfg_.omega0,
                        cfg_.steps_per_year};
    const auto b = params_.add("meta.field.norm", 6);
    params_[b].value = {center_.x(), center_.y(), center_.z(), half_extent_, t_lo_, t_hi_};
  }

  void check(std::size_t index, std::size_t size) const {
    if (index >= params_.size() || params_[index].value.size() != size) {
      throw DataError("velocity field checkpoint: parameter shape mismatch");
    }
  }

  std::size_t in_width(std::size_t l) const { return l == 0 ? 4 : cfg_.width; }

  // Copies, not maps: Eigen's vectorised kernels peel a scalar head whose
  // length depends on where the heap put std::vector storage, so products
  // over maps change in the last bits from run to run.
  Eigen::MatrixXd weight(std::size_t l) const {
    return RowMap(params_[2 * l].value.data(), static_cast<Eigen::Index>(cfg_.width),
                  static_cast<Eigen::Index>(in_width(l)));
  }
  Eigen::VectorXd bias(std::size_t l) const {
    return Eigen::Map<const Eigen::VectorXd>(params_[2 * l + 1].value.data(), static_cast<Eigen::Index>(cfg_.width));
  }
  Eigen::MatrixXd out_weight() const {
    return RowMap(params_[2 * cfg_.hidden_layers].value.data(), 3, static_cast<Eigen::Index>(cfg_.width));
  }
  Eigen::Vector3d out_bias() const {
    return Eigen::Map<const Eigen::Vector3d>(params_[2 * cfg_.hidden_layers + 1].value.data());
  }
  MutRowMap grad_map(std::size_t index, std::size_t rows, std::size_t cols) {
    auto& g = params_[index].grad;
    if (g.size() != rows * cols) g.assign(rows * cols, 0.0);
    return MutRowMap(g.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  }
  Eigen::Map<Eigen::VectorXd> grad_vec(std::size_t index, std::size_t size) {
    auto& g = params_[index].grad;
    if (g.size() != size) g.assign(size, 0.0);
    return Eigen::Map<Eigen::VectorXd>(g.data(), static_cast<Eigen::Index>(size));
  }

  FieldConfig cfg_;
  ga::ParamSet params_;
  Eigen::Vector3d center_ = Eigen::Vector3d::Zero();
  double half_extent_ = 1.0;
  double t_lo_ = 0.0, t_hi_ = 1.0;
};

}  // namespace aaa::temporal
