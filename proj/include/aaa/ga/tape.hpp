#pragma once

// Minimal reverse-mode differentiation over dense real arrays. Each node
// holds a value, a lazily allocated gradient and a closure that pushes its
// gradient to its parents. Only the operations defined in ops.hpp record
// closures; the set is closed and every one of them is gradchecked.

#include <cstddef>
#include <functional>
#include <vector>

#include "aaa/error.hpp"
#include "aaa/ga/params.hpp"

namespace aaa::ga {

struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t size() const { return rows * cols; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const std::vector<double>& value() const;
  const Shape& shape() const;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&)>;

  struct Node {
    std::vector<double> value;
    std::vector<double> grad;
    Shape shape;
    Backward backward;
    Param* sink = nullptr;
  };

  Var constant(std::vector<double> value, Shape shape) {
    if (value.size() != shape.size()) throw InvalidArgument("tape: value size does not match shape");
    nodes_.push_back({std::move(value), {}, shape, {}, nullptr});
    return {this, nodes_.size() - 1};
  }

  Var parameter(Param& p) {
    nodes_.push_back({p.value, {}, Shape{1, p.value.size()}, {}, &p});
    return {this, nodes_.size() - 1};
  }

  // Records a derived node. `backward` reads grad(out) and accumulates into
  // the gradients of its inputs.
  Var record(std::vector<double> value, Shape shape, Backward backward) {
    nodes_.push_back({std::move(value), {}, shape, std::move(backward), nullptr});
    return {this, nodes_.size() - 1};
  }

  void set_backward(Var v, Backward backward) { nodes_.at(v.id).backward = std::move(backward); }

  const std::vector<double>& value(Var v) const { return nodes_.at(v.id).value; }
  const Shape& shape(Var v) const { return nodes_.at(v.id).shape; }

  // Gradient buffer of a node; valid during backward().
  std::vector<double>& grad(Var v) {
    auto& n = nodes_.at(v.id);
    if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), 0.0);
    return n.grad;
  }

  // Seeds d(root)/d(root) = 1 for a scalar root, runs all closures in reverse
  // order and accumulates parameter gradients into their Param::grad.
  void backward(Var root) {
    if (nodes_.at(root.id).value.size() != 1) throw InvalidArgument("backward: root must be scalar");
    for (auto& n : nodes_) n.grad.clear();
    grad(root)[0] = 1.0;
    for (std::size_t i = root.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.empty()) continue;
      if (n.backward) n.backward(*this);
      if (n.sink != nullptr) {
        Node& m = nodes_[i];
        for (std::size_t k = 0; k < m.grad.size(); ++k) m.sink->grad[k] += m.grad[k];
      }
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
};

inline const std::vector<double>& Var::value() const { return tape->value(*this); }
inline const Shape& Var::shape() const { return tape->shape(*this); }

// Binds a ParamSet to a tape, creating one leaf per parameter on first use.
// Gradients flow into the parameters only when the graph was built over a
// mutable ParamSet.
class Graph {
 public:
  explicit Graph(ParamSet& params)
      : params_(&params), mutable_(&params), bound_(params.size(), kUnbound) {}
  explicit Graph(const ParamSet& params) : params_(&params), bound_(params.size(), kUnbound) {}

  Tape& tape() { return tape_; }

  Var param(std::size_t index) {
    if (index >= bound_.size()) throw InvalidArgument("graph: parameter index out of range");
    if (bound_[index] == kUnbound) {
      if (mutable_ != nullptr) {
        bound_[index] = tape_.parameter((*mutable_)[index]).id;
      } else {
        const auto& p = (*params_)[index];
        bound_[index] = tape_.constant(p.value, Shape{1, p.value.size()}).id;
      }
    }
    return {&tape_, bound_[index]};
  }

  Var constant(std::vector<double> value, Shape shape) { return tape_.constant(std::move(value), shape); }

  void backward(Var root) { tape_.backward(root); }

 private:
  static constexpr std::size_t kUnbound = static_cast<std::size_t>(-1);
  Tape tape_;
  const ParamSet* params_;
  ParamSet* mutable_ = nullptr;
  std::vector<std::size_t> bound_;
};

}  // namespace aaa::ga
