#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>
#include <Eigen/StdVector>

#include "spliceguard/error.hpp"
#include "spliceguard/matrix.hpp"

namespace spliceguard::nn {

using Shape = std::vector<std::size_t>;

/// Storage aligned to Eigen's widest packet, so vectorized kernels always
/// take the same code path (and produce the same rounding) for a given shape.
template <class S>
using AlignedVector = std::vector<S, Eigen::aligned_allocator<S>>;

inline std::size_t shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

/// Dense row-major array. Rank-1 tensors view as a 1 x n row.
template <class S>
struct Tensor {
  using Map = Eigen::Map<RowMatrix<S>>;
  using ConstMap = Eigen::Map<const RowMatrix<S>>;

  Shape shape;
  AlignedVector<S> data;

  Tensor() = default;
  explicit Tensor(Shape s, S fill = S(0)) : shape(std::move(s)), data(shape_size(shape), fill) {}

  static Tensor from_matrix(const RowMatrix<S>& m) {
    Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
    Map(t.data.data(), m.rows(), m.cols()) = m;
    return t;
  }

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty() && shape.empty(); }

  Eigen::Index rows() const {
    if (shape.size() <= 1) return 1;
    return static_cast<Eigen::Index>(shape[0]);
  }
  Eigen::Index cols() const {
    if (shape.empty()) return 1;
    if (shape.size() == 1) return static_cast<Eigen::Index>(shape[0]);
    return static_cast<Eigen::Index>(data.size() / shape[0]);
  }

  Map mat() { return Map(data.data(), rows(), cols()); }
  ConstMap mat() const { return ConstMap(data.data(), rows(), cols()); }

  S& operator[](std::size_t i) { return data[i]; }
  S operator[](std::size_t i) const { return data[i]; }

  void fill(S v) { std::fill(data.begin(), data.end(), v); }

  template <class T>
  Tensor<T> cast() const {
    Tensor<T> out;
    out.shape = shape;
    out.data.assign(data.begin(), data.end());
    return out;
  }
};

template <class S>
struct Parameter {
  std::string name;
  Tensor<S> value;
};

/// Ordered, uniquely named collection of learnable tensors.
template <class S>
class ParameterSet {
 public:
  std::size_t add(const std::string& name, Shape shape) {
    require(!index_.contains(name), ErrorKind::internal, "duplicate parameter name " + name);
    index_.emplace(name, params_.size());
    params_.push_back({name, Tensor<S>(std::move(shape))});
    return params_.size() - 1;
  }

  std::size_t size() const { return params_.size(); }
  Parameter<S>& operator[](std::size_t i) { return params_[i]; }
  const Parameter<S>& operator[](std::size_t i) const { return params_[i]; }

  bool contains(const std::string& name) const { return index_.contains(name); }
  std::size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    require(it != index_.end(), ErrorKind::argument, "unknown parameter " + name);
    return it->second;
  }
  Tensor<S>& value(const std::string& name) { return params_[index_of(name)].value; }
  const Tensor<S>& value(const std::string& name) const { return params_[index_of(name)].value; }

  std::size_t element_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  /// True when both sets have identical names and shapes in identical order.
  bool same_manifest(const ParameterSet& other) const {
    if (size() != other.size()) return false;
    for (std::size_t i = 0; i < size(); ++i)
      if (params_[i].name != other.params_[i].name || params_[i].value.shape != other.params_[i].value.shape)
        return false;
    return true;
  }

  template <class T>
  ParameterSet<T> cast() const {
    ParameterSet<T> out;
    for (const auto& p : params_) {
      out.add(p.name, p.value.shape);
      out[out.size() - 1].value = p.value.template cast<T>();
    }
    return out;
  }

 private:
  std::vector<Parameter<S>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Gradient accumulator shaped like a ParameterSet.
template <class S>
struct Gradients {
  std::vector<Tensor<S>> grads;

  Gradients() = default;
  explicit Gradients(const ParameterSet<S>& params) {
    grads.reserve(params.size());
    for (const auto& p : params) grads.emplace_back(p.value.shape);
  }

  void zero() {
    for (auto& g : grads) g.fill(S(0));
  }

  void add(const Gradients& other) {
    for (std::size_t i = 0; i < grads.size(); ++i) grads[i].mat() += other.grads[i].mat();
  }

  void scale(S factor) {
    for (auto& g : grads) g.mat() *= factor;
  }
};

}  // namespace spliceguard::nn
