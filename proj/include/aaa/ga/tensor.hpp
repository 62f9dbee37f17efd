#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "aaa/error.hpp"
#include "aaa/ga/multivector.hpp"

namespace aaa::ga {

// n x c array of multivectors stored row-major as n x (16 c) reals.
class MVTensor {
 public:
  MVTensor() = default;
  MVTensor(std::size_t rows, std::size_t channels)
      : rows_(rows), channels_(channels), data_(rows * channels * kComponents, 0.0) {}
  MVTensor(std::size_t rows, std::size_t channels, std::vector<double> data)
      : rows_(rows), channels_(channels), data_(std::move(data)) {
    if (data_.size() != rows_ * channels_ * kComponents) {
      throw InvalidArgument("MVTensor: data size does not match rows x channels x 16");
    }
  }

  std::size_t rows() const { return rows_; }
  std::size_t channels() const { return channels_; }
  std::size_t reals_per_row() const { return channels_ * kComponents; }

  std::span<double> row(std::size_t r) {
    return {data_.data() + r * reals_per_row(), reals_per_row()};
  }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * reals_per_row(), reals_per_row()};
  }

  Multivector at(std::size_t r, std::size_t c) const {
    Multivector m;
    const double* p = data_.data() + (r * channels_ + c) * kComponents;
    for (int i = 0; i < kComponents; ++i) m.c[i] = p[i];
    return m;
  }
  void set(std::size_t r, std::size_t c, const Multivector& m) {
    double* p = data_.data() + (r * channels_ + c) * kComponents;
    for (int i = 0; i < kComponents; ++i) p[i] = m.c[i];
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

 private:
  std::size_t rows_ = 0;
  std::size_t channels_ = 0;
  std::vector<double> data_;
};

inline MVTensor apply_motion(const RigidMotion& m, const MVTensor& x) {
  MVTensor out(x.rows(), x.channels());
  const Multivector v = m.versor();
  const Multivector vr = reverse(v);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.channels(); ++c) out.set(r, c, v * x.at(r, c) * vr);
  }
  return out;
}

}  // namespace aaa::ga
