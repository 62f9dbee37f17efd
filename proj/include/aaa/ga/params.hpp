#pragma once

// Named parameter arrays, the Adam optimiser, and the flat little-endian
// checkpoint format shared by every learnable component:
//
//   "GATR" | u32 version | u32 record count |
//   { u32 name length | name bytes | u64 value count | f64 values } ...

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "aaa/error.hpp"

namespace aaa::ga {

struct Param {
  std::string name;
  std::vector<double> value;
  std::vector<double> grad;
};

class ParamSet {
 public:
  std::size_t add(std::string name, std::size_t size) {
    for (const auto& p : params_) {
      if (p.name == name) throw InvalidArgument("duplicate parameter name: " + name);
    }
    params_.push_back({std::move(name), std::vector<double>(size, 0.0), std::vector<double>(size, 0.0)});
    return params_.size() - 1;
  }

  Param& operator[](std::size_t i) { return params_.at(i); }
  const Param& operator[](std::size_t i) const { return params_.at(i); }
  std::size_t size() const { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  std::size_t find(const std::string& name) const {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (params_[i].name == name) return i;
    }
    throw DataError("unknown parameter: " + name);
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), 0.0);
  }

  void scale_grad(double s) {
    for (auto& p : params_) {
      for (double& g : p.grad) g *= s;
    }
  }

  bool all_finite() const {
    for (const auto& p : params_) {
      for (double v : p.value) {
        if (!std::isfinite(v)) return false;
      }
    }
    return true;
  }

 private:
  std::vector<Param> params_;
};

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(ParamSet& params) {
    if (m_.size() != params.size()) {
      m_.clear();
      v_.clear();
      for (const auto& p : params) {
        m_.emplace_back(p.value.size(), 0.0);
        v_.emplace_back(p.value.size(), 0.0);
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i];
      for (std::size_t k = 0; k < p.value.size(); ++k) {
        const double g = p.grad[k];
        m_[i][k] = cfg_.beta1 * m_[i][k] + (1.0 - cfg_.beta1) * g;
        v_[i][k] = cfg_.beta2 * v_[i][k] + (1.0 - cfg_.beta2) * g * g;
        p.value[k] -= cfg_.learning_rate * (m_[i][k] / c1) / (std::sqrt(v_[i][k] / c2) + cfg_.epsilon);
      }
    }
    if (!params.all_finite()) throw NumericalError("non-finite parameter after optimiser step");
  }

  void set_learning_rate(double lr) { cfg_.learning_rate = lr; }

 private:
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
};

// ---------------------------------------------------------------------------
// Checkpoint I/O

inline constexpr char kCheckpointMagic[4] = {'G', 'A', 'T', 'R'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <typename T>
void write_le(std::ostream& os, T value) {
  static_assert(std::endian::native == std::endian::little, "big-endian hosts unsupported");
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is) throw DataError("truncated checkpoint");
  return value;
}

}  // namespace detail

struct CheckpointRecord {
  std::string name;
  std::vector<double> values;
};

inline void write_checkpoint(std::ostream& os, const std::vector<CheckpointRecord>& records) {
  os.write(kCheckpointMagic, 4);
  detail::write_le<std::uint32_t>(os, kCheckpointVersion);
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(records.size()));
  for (const auto& r : records) {
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(r.name.size()));
    os.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
    detail::write_le<std::uint64_t>(os, r.values.size());
    for (double v : r.values) detail::write_le<double>(os, v);
  }
}

inline std::vector<CheckpointRecord> read_checkpoint(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kCheckpointMagic, 4) != 0) throw DataError("not a GATR checkpoint");
  const auto version = detail::read_le<std::uint32_t>(is);
  if (version != kCheckpointVersion) throw DataError("unsupported checkpoint version");
  const auto count = detail::read_le<std::uint32_t>(is);
  std::vector<CheckpointRecord> records;
  records.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointRecord r;
    const auto len = detail::read_le<std::uint32_t>(is);
    r.name.resize(len);
    is.read(r.name.data(), len);
    const auto n = detail::read_le<std::uint64_t>(is);
    if (n > (1ull << 32)) throw DataError("corrupt checkpoint record size");
    r.values.resize(n);
    for (auto& v : r.values) v = detail::read_le<double>(is);
    records.push_back(std::move(r));
  }
  return records;
}

inline std::vector<CheckpointRecord> to_records(const ParamSet& params) {
  std::vector<CheckpointRecord> out;
  for (const auto& p : params) out.push_back({p.name, p.value});
  return out;
}

// Loads values into an already-shaped parameter set.
inline void load_records(ParamSet& params, const std::vector<CheckpointRecord>& records) {
  for (const auto& r : records) {
    bool found = false;
    for (auto& p : params) {
      if (p.name != r.name) continue;
      if (p.value.size() != r.values.size()) throw DataError("shape mismatch for parameter " + r.name);
      p.value = r.values;
      found = true;
    }
    if (!found && r.name.rfind("meta.", 0) != 0) throw DataError("unexpected parameter " + r.name);
  }
}

inline const CheckpointRecord& find_record(const std::vector<CheckpointRecord>& records,
                                           const std::string& name) {
  for (const auto& r : records) {
    if (r.name == name) return r;
  }
  throw DataError("checkpoint is missing record " + name);
}

inline void save_checkpoint(const std::string& path, const std::vector<CheckpointRecord>& records) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path);
  write_checkpoint(os, records);
}

inline std::vector<CheckpointRecord> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot read " + path);
  return read_checkpoint(is);
}

}  // namespace aaa::ga
