#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "spliceguard/nn/tensor.hpp"

namespace spliceguard::nn {

template <class S>
class Tape;

/// Handle to a value recorded on a Tape.
template <class S>
struct Var {
  Tape<S>* tape = nullptr;
  int id = -1;

  const Tensor<S>& value() const { return tape->value(id); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

/// Reverse-mode recording of one forward pass.
///
/// Parameter leaves reference the ParameterSet directly (no copy); their
/// gradients are accumulated into a caller-owned Gradients object by
/// backward(). A non-recording tape keeps only forward values.
template <class S>
class Tape {
 public:
  using Backward = std::function<void(int self)>;

  explicit Tape(bool record = true) : record_(record) { nodes_.reserve(256); }

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  Var<S> constant(Tensor<S> value) { return push(std::move(value), false, {}); }

  Var<S> parameter(const ParameterSet<S>& params, std::size_t index) {
    Node n;
    n.ref = &params[index].value;
    n.requires_grad = record_;
    n.param = static_cast<long>(index);
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size() - 1)};
  }

  Var<S> parameter(const ParameterSet<S>& params, const std::string& name) {
    return parameter(params, params.index_of(name));
  }

  /// Record an op result. `backward` reads grad(result) and accumulates into
  /// the grads of its inputs; it receives the result id and is dropped when
  /// nothing needs a gradient.
  Var<S> push(Tensor<S> value, bool requires_grad, Backward backward) {
    Node n;
    n.owned = std::move(value);
    n.requires_grad = record_ && requires_grad;
    if (n.requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size() - 1)};
  }

  const Tensor<S>& value(int id) const {
    const Node& n = nodes_[id];
    return n.ref ? *n.ref : n.owned;
  }

  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

  /// Gradient buffer of a node, allocated as zeros on first access.
  Tensor<S>& grad(int id) {
    Node& n = nodes_[id];
    if (n.grad.data.empty()) n.grad = Tensor<S>(value(id).shape);
    return n.grad;
  }

  /// Seed d(root) = 1 and propagate. Parameter gradients are added to `sink`.
  void backward(Var<S> root, Gradients<S>& sink) {
    require(record_, ErrorKind::internal, "backward on a non-recording tape");
    require(root.tape == this, ErrorKind::internal, "backward root belongs to another tape");
    grad(root.id).fill(S(1));
    for (int id = root.id; id >= 0; --id) {
      Node& n = nodes_[id];
      if (!n.requires_grad || n.grad.data.empty()) continue;
      if (n.param >= 0) {
        sink.grads[static_cast<std::size_t>(n.param)].mat() += n.grad.mat();
      } else if (n.backward) {
        n.backward(id);
      }
    }
  }

 private:
  struct Node {
    Tensor<S> owned;
    const Tensor<S>* ref = nullptr;
    Tensor<S> grad;
    bool requires_grad = false;
    long param = -1;
    Backward backward;
  };

  bool record_;
  std::vector<Node> nodes_;
};

}  // namespace spliceguard::nn
