#pragma once

#include <cassert>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dcdp/core.hpp"

namespace dcdp {

/// A named trainable parameter. Gradients are accumulated here by
/// Tape::backward and consumed (then cleared) by the optimizer, which also
/// owns the moment buffers.
template <typename S>
struct Tensor {
  std::string name;
  Mat<S> value;
  Mat<S> grad;
  Mat<S> adam_m;
  Mat<S> adam_v;

  Tensor(std::string n, Index rows, Index cols)
      : name(std::move(n)),
        value(Mat<S>::Zero(rows, cols)),
        grad(Mat<S>::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(); }
};

template <typename S>
class Tape;

/// Cheap handle into a tape node.
template <typename S>
struct Var {
  Tape<S>* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr; }
  const Mat<S>& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  S scalar() const {
    assert(value().size() == 1);
    return value()(0, 0);
  }
};

/// Eagerly evaluated reverse-mode tape over dense matrices. Nodes are created
/// in topological order, so backward is a single reverse sweep.
template <typename S>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int)>;

  struct Node {
    Mat<S> value;
    Mat<S> grad;
    bool needs_grad = false;
    bool grad_live = false;
    BackwardFn backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// When frozen, param() mounts constants: no gradients reach any Tensor.
  void set_params_frozen(bool frozen) { params_frozen_ = frozen; }
  bool params_frozen() const { return params_frozen_; }

  Var<S> constant(Mat<S> v) { return make(std::move(v), false, nullptr); }

  Var<S> constant_scalar(S v) {
    Mat<S> m(1, 1);
    m(0, 0) = v;
    return constant(std::move(m));
  }

  Var<S> zeros(Index rows, Index cols) { return constant(Mat<S>::Zero(rows, cols)); }

  /// Mount a parameter as a leaf. Mounting the same tensor twice returns the
  /// same node, so shared weights (e.g. a recurrent cell) accumulate
  /// correctly.
  Var<S> param(Tensor<S>& t) {
    if (params_frozen_) {
      auto it = frozen_mounts_.find(&t);
      if (it != frozen_mounts_.end()) return Var<S>{this, it->second};
      Var<S> v = constant(t.value);
      frozen_mounts_.emplace(&t, v.id);
      return v;
    }
    auto it = param_mounts_.find(&t);
    if (it != param_mounts_.end()) return Var<S>{this, it->second};
    Var<S> v = make(t.value, true, nullptr);
    param_mounts_.emplace(&t, v.id);
    return v;
  }

  Var<S> make(Mat<S> value, bool needs_grad, BackwardFn backward) {
    nodes_.push_back(Node{std::move(value), Mat<S>(), needs_grad, false, std::move(backward)});
    return Var<S>{this, int(nodes_.size()) - 1};
  }

  const Mat<S>& value(Var<S> v) const { return nodes_[v.id].value; }
  const Node& node(int id) const { return nodes_[id]; }
  bool needs_grad(Var<S> v) const { return nodes_[v.id].needs_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Gradient buffer for a node, allocated and zeroed on first touch.
  Mat<S>& grad_ref(int id) {
    Node& n = nodes_[id];
    if (!n.grad_live) {
      n.grad.setZero(n.value.rows(), n.value.cols());
      n.grad_live = true;
    }
    return n.grad;
  }

  template <typename Derived>
  void acc_grad(int id, const Eigen::MatrixBase<Derived>& g) {
    if (!nodes_[id].needs_grad) return;
    grad_ref(id) += g;
  }

  template <typename Derived>
  void acc_grad(int id, const Eigen::ArrayBase<Derived>& g) {
    if (!nodes_[id].needs_grad) return;
    grad_ref(id) += g.matrix();
  }

  /// Gradient of a node after backward(); zero matrix if it never received one.
  Mat<S> grad(Var<S> v) const {
    const Node& n = nodes_[v.id];
    if (!n.grad_live) return Mat<S>::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  /// Reverse sweep from a scalar loss. Accumulates into each mounted Tensor's
  /// grad buffer.
  void backward(Var<S> loss) {
    assert(loss.tape == this);
    assert(nodes_[loss.id].value.size() == 1 && "backward expects a scalar loss");
    grad_ref(loss.id)(0, 0) = S(1);
    for (int id = loss.id; id >= 0; --id) {
      Node& n = nodes_[id];
      if (n.grad_live && n.backward && n.needs_grad) n.backward(*this, id);
    }
    for (auto& [tensor, id] : param_mounts_) {
      Node& n = nodes_[id];
      if (n.grad_live) tensor->grad += n.grad;
    }
  }

  void clear() {
    nodes_.clear();
    param_mounts_.clear();
    frozen_mounts_.clear();
  }

 private:
  std::vector<Node> nodes_;
  std::unordered_map<Tensor<S>*, int> param_mounts_;
  std::unordered_map<Tensor<S>*, int> frozen_mounts_;
  bool params_frozen_ = false;
};

template <typename S>
const Mat<S>& Var<S>::value() const {
  return tape->value(*this);
}

}  // namespace dcdp
