#pragma once

#include <cmath>
#include <optional>
#include <type_traits>
#include <string>
#include <vector>

#include "spliceguard/nn/tape.hpp"

namespace spliceguard::nn {

namespace detail {

template <class S>
Tensor<S> matrix_tensor(Eigen::Index rows, Eigen::Index cols) {
  return Tensor<S>({static_cast<std::size_t>(rows), static_cast<std::size_t>(cols)});
}

template <class S>
bool any_grad(Tape<S>* t, std::initializer_list<int> ids) {
  for (int id : ids)
    if (id >= 0 && t->requires_grad(id)) return true;
  return false;
}

template <class S>
void same_tape(const Var<S>& a, const Var<S>& b) {
  require(a.tape == b.tape, ErrorKind::internal, "operands recorded on different tapes");
}

template <class S>
S sigmoid(S z) {
  if (z >= 0) return S(1) / (S(1) + std::exp(-z));
  const S e = std::exp(z);
  return e / (S(1) + e);
}

}  // namespace detail

/// y = x W^T + b, with x: T x in, W: out x in, b: out.
template <class S>
Var<S> linear(Var<S> x, Var<S> w, std::optional<std::type_identity_t<Var<S>>> b = std::nullopt) {
  detail::same_tape(x, w);
  Tape<S>* t = x.tape;
  const auto X = x.value().mat();
  const auto W = w.value().mat();
  require(X.cols() == W.cols(), ErrorKind::shape,
          "linear: input width " + std::to_string(X.cols()) + " vs weight " + shape_string(w.value().shape));
  Tensor<S> out = detail::matrix_tensor<S>(X.rows(), W.rows());
  out.mat().noalias() = X * W.transpose();
  const int bid = b ? b->id : -1;
  if (b) {
    require(b->value().size() == static_cast<std::size_t>(W.rows()), ErrorKind::shape, "linear: bias size");
    out.mat().rowwise() += b->value().mat().row(0);
  }
  const int xid = x.id, wid = w.id;
  return t->push(std::move(out), detail::any_grad(t, {xid, wid, bid}), [t, xid, wid, bid](int self) {
    const auto dY = t->grad(self).mat();
    if (t->requires_grad(xid)) t->grad(xid).mat().noalias() += dY * t->value(wid).mat();
    if (t->requires_grad(wid)) t->grad(wid).mat().noalias() += dY.transpose() * t->value(xid).mat();
    if (bid >= 0 && t->requires_grad(bid)) t->grad(bid).mat().row(0) += dY.colwise().sum();
  });
}

/// Cross-correlation over time. x: T x C_in, weight: C_out x C_in x K,
/// output: T' x C_out with T' = (T + 2*padding - K) / stride + 1.
template <class S>
Var<S> conv1d(Var<S> x, Var<S> w, std::optional<std::type_identity_t<Var<S>>> b, int padding, int stride) {
  detail::same_tape(x, w);
  Tape<S>* t = x.tape;
  const Shape& ws = w.value().shape;
  require(ws.size() == 3, ErrorKind::shape, "conv1d: weight must be C_out x C_in x K");
  require(stride >= 1 && padding >= 0, ErrorKind::argument, "conv1d: stride >= 1 and padding >= 0 required");
  const auto X = x.value().mat();
  const Eigen::Index cin = static_cast<Eigen::Index>(ws[1]);
  const Eigen::Index k = static_cast<Eigen::Index>(ws[2]);
  require(X.cols() == cin, ErrorKind::shape,
          "conv1d: input has " + std::to_string(X.cols()) + " channels, weight expects " + std::to_string(cin));
  require(k >= 1, ErrorKind::argument, "conv1d: kernel size must be >= 1");
  if (k == 1 && padding == 0 && stride == 1) return linear(x, w, b);

  const Eigen::Index len = X.rows();
  require(len + 2 * padding >= k, ErrorKind::shape, "conv1d: input shorter than kernel");
  const Eigen::Index out_len = (len + 2 * padding - k) / stride + 1;

  // Column (c * K + j) of row i holds x[i * stride + j - padding][c].
  RowMatrix<S> cols = RowMatrix<S>::Zero(out_len, cin * k);
  for (Eigen::Index i = 0; i < out_len; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      const Eigen::Index src = i * stride + j - padding;
      if (src < 0 || src >= len) continue;
      for (Eigen::Index c = 0; c < cin; ++c) cols(i, c * k + j) = X(src, c);
    }
  }
  const auto W = w.value().mat();
  Tensor<S> out = detail::matrix_tensor<S>(out_len, W.rows());
  out.mat().noalias() = cols * W.transpose();
  const int bid = b ? b->id : -1;
  if (b) {
    require(b->value().size() == static_cast<std::size_t>(W.rows()), ErrorKind::shape, "conv1d: bias size");
    out.mat().rowwise() += b->value().mat().row(0);
  }
  const int xid = x.id, wid = w.id;
  const bool need = detail::any_grad(t, {xid, wid, bid});
  return t->push(std::move(out), need,
                 [t, xid, wid, bid, cols = need ? std::move(cols) : RowMatrix<S>(), len, cin, k, stride,
                  padding](int self) {
                   const auto dY = t->grad(self).mat();
                   if (t->requires_grad(wid)) t->grad(wid).mat().noalias() += dY.transpose() * cols;
                   if (bid >= 0 && t->requires_grad(bid)) t->grad(bid).mat().row(0) += dY.colwise().sum();
                   if (t->requires_grad(xid)) {
                     const RowMatrix<S> dcols = dY * t->value(wid).mat();
                     auto dX = t->grad(xid).mat();
                     for (Eigen::Index i = 0; i < dcols.rows(); ++i) {
                       for (Eigen::Index j = 0; j < k; ++j) {
                         const Eigen::Index src = i * stride + j - padding;
                         if (src < 0 || src >= len) continue;
                         for (Eigen::Index c = 0; c < cin; ++c) dX(src, c) += dcols(i, c * k + j);
                       }
                     }
                   }
                 });
}

template <class S>
Var<S> add(Var<S> a, Var<S> b) {
  detail::same_tape(a, b);
  Tape<S>* t = a.tape;
  require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorKind::shape,
          "add: shape mismatch " + shape_string(a.value().shape) + " vs " + shape_string(b.value().shape));
  Tensor<S> out = a.value();
  out.mat() += b.value().mat();
  const int aid = a.id, bid = b.id;
  return t->push(std::move(out), detail::any_grad(t, {aid, bid}), [t, aid, bid](int self) {
    const auto dY = t->grad(self).mat();
    if (t->requires_grad(aid)) t->grad(aid).mat() += dY;
    if (t->requires_grad(bid)) t->grad(bid).mat() += dY;
  });
}

template <class S>
Var<S> scale(Var<S> x, S factor) {
  Tape<S>* t = x.tape;
  Tensor<S> out = x.value();
  out.mat() *= factor;
  const int xid = x.id;
  return t->push(std::move(out), t->requires_grad(xid),
                 [t, xid, factor](int self) { t->grad(xid).mat() += factor * t->grad(self).mat(); });
}

template <class S>
Var<S> relu(Var<S> x) {
  Tape<S>* t = x.tape;
  Tensor<S> out = x.value();
  out.mat() = out.mat().cwiseMax(S(0));
  const int xid = x.id;
  return t->push(std::move(out), t->requires_grad(xid), [t, xid](int self) {
    const auto Y = t->value(self).mat();
    t->grad(xid).mat() += (Y.array() > S(0)).select(t->grad(self).mat(), S(0));
  });
}

template <class S>
Var<S> sigmoid(Var<S> x) {
  Tape<S>* t = x.tape;
  Tensor<S> out = x.value();
  for (auto& v : out.data) v = detail::sigmoid(v);
  const int xid = x.id;
  return t->push(std::move(out), t->requires_grad(xid), [t, xid](int self) {
    const auto Y = t->value(self).mat().array();
    t->grad(xid).mat().array() += t->grad(self).mat().array() * Y * (S(1) - Y);
  });
}

template <class S>
Var<S> tanh(Var<S> x) {
  Tape<S>* t = x.tape;
  Tensor<S> out = x.value();
  out.mat() = out.mat().array().tanh().matrix();
  const int xid = x.id;
  return t->push(std::move(out), t->requires_grad(xid), [t, xid](int self) {
    const auto Y = t->value(self).mat().array();
    t->grad(xid).mat().array() += t->grad(self).mat().array() * (S(1) - Y.square());
  });
}

/// A (m x k) * B (k x n).
template <class S>
Var<S> matmul(Var<S> a, Var<S> b) {
  detail::same_tape(a, b);
  Tape<S>* t = a.tape;
  require(a.cols() == b.rows(), ErrorKind::shape, "matmul: inner dimensions differ");
  Tensor<S> out = detail::matrix_tensor<S>(a.rows(), b.cols());
  out.mat().noalias() = a.value().mat() * b.value().mat();
  const int aid = a.id, bid = b.id;
  return t->push(std::move(out), detail::any_grad(t, {aid, bid}), [t, aid, bid](int self) {
    const auto dY = t->grad(self).mat();
    if (t->requires_grad(aid)) t->grad(aid).mat().noalias() += dY * t->value(bid).mat().transpose();
    if (t->requires_grad(bid)) t->grad(bid).mat().noalias() += t->value(aid).mat().transpose() * dY;
  });
}

/// A (m x k) * B^T with B (n x k).
template <class S>
Var<S> matmul_nt(Var<S> a, Var<S> b) {
  detail::same_tape(a, b);
  Tape<S>* t = a.tape;
  require(a.cols() == b.cols(), ErrorKind::shape, "matmul_nt: inner dimensions differ");
  Tensor<S> out = detail::matrix_tensor<S>(a.rows(), b.rows());
  out.mat().noalias() = a.value().mat() * b.value().mat().transpose();
  const int aid = a.id, bid = b.id;
  return t->push(std::move(out), detail::any_grad(t, {aid, bid}), [t, aid, bid](int self) {
    const auto dY = t->grad(self).mat();
    if (t->requires_grad(aid)) t->grad(aid).mat().noalias() += dY * t->value(bid).mat();
    if (t->requires_grad(bid)) t->grad(bid).mat().noalias() += dY.transpose() * t->value(aid).mat();
  });
}

/// Row-wise softmax.
template <class S>
Var<S> softmax_rows(Var<S> x) {
  Tape<S>* t = x.tape;
  Tensor<S> out = x.value();
  auto Y = out.mat();
  for (Eigen::Index r = 0; r < Y.rows(); ++r) {
    const S mx = Y.row(r).maxCoeff();
    Y.row(r) = (Y.row(r).array() - mx).exp().matrix();
    Y.row(r) /= Y.row(r).sum();
  }
  const int xid = x.id;
  return t->push(std::move(out), t->requires_grad(xid), [t, xid](int self) {
    const auto Y = t->value(self).mat();
    const auto dY = t->grad(self).mat();
    const Eigen::Matrix<S, Eigen::Dynamic, 1> dots = (dY.array() * Y.array()).rowwise().sum();
    t->grad(xid).mat().array() += Y.array() * (dY.array().colwise() - dots.array());
  });
}

/// Per-row normalization to zero mean, unit variance, then gain and bias.
template <class S>
Var<S> layer_norm(Var<S> x, Var<S> gain, Var<S> bias, S eps = S(1e-5)) {
  detail::same_tape(x, gain);
  Tape<S>* t = x.tape;
  const auto X = x.value().mat();
  const Eigen::Index d = X.cols();
  require(gain.value().size() == static_cast<std::size_t>(d) && bias.value().size() == static_cast<std::size_t>(d),
          ErrorKind::shape, "layer_norm: gain/bias width");
  RowMatrix<S> xhat(X.rows(), d);
  Eigen::Matrix<S, Eigen::Dynamic, 1> inv_std(X.rows());
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    const S mean = X.row(r).mean();
    const S var = (X.row(r).array() - mean).square().mean();
    inv_std[r] = S(1) / std::sqrt(var + eps);
    xhat.row(r) = (X.row(r).array() - mean) * inv_std[r];
  }
  Tensor<S> out = detail::matrix_tensor<S>(X.rows(), d);
  out.mat() = (xhat.array().rowwise() * gain.value().mat().row(0).array()).matrix();
  out.mat().rowwise() += bias.value().mat().row(0);
  const int xid = x.id, gid = gain.id, bid = bias.id;
  return t->push(std::move(out), detail::any_grad(t, {xid, gid, bid}),
                 [t, xid, gid, bid, xhat = std::move(xhat), inv_std = std::move(inv_std)](int self) {
                   const auto dY = t->grad(self).mat();
                   if (t->requires_grad(gid)) t->grad(gid).mat().row(0) += (dY.array() * xhat.array()).colwise().sum().matrix();
                   if (t->requires_grad(bid)) t->grad(bid).mat().row(0) += dY.colwise().sum();
                   if (t->requires_grad(xid)) {
                     const RowMatrix<S> dxhat = (dY.array().rowwise() * t->value(gid).mat().row(0).array()).matrix();
                     const Eigen::Matrix<S, Eigen::Dynamic, 1> m1 = dxhat.rowwise().mean();
                     const Eigen::Matrix<S, Eigen::Dynamic, 1> m2 = (dxhat.array() * xhat.array()).rowwise().mean();
                     auto dX = t->grad(xid).mat();
                     for (Eigen::Index r = 0; r < dxhat.rows(); ++r)
                       dX.row(r).array() += inv_std[r] * (dxhat.row(r).array() - m1[r] - xhat.row(r).array() * m2[r]);
                   }
                 });
}

template <class S>
Var<S> slice_cols(Var<S> x, Eigen::Index start, Eigen::Index count) {
  Tape<S>* t = x.tape;
  require(start >= 0 && count >= 0 && start + count <= x.cols(), ErrorKind::shape, "slice_cols: out of range");
  Tensor<S> out = detail::matrix_tensor<S>(x.rows(), count);
  out.mat() = x.value().mat().middleCols(start, count);
  const int xid = x.id;
  return t->push(std::move(out), t->requires_grad(xid), [t, xid, start, count](int self) {
    t->grad(xid).mat().middleCols(start, count) += t->grad(self).mat();
  });
}

template <class S>
Var<S> concat_cols(const std::vector<Var<S>>& parts) {
  require(!parts.empty(), ErrorKind::argument, "concat_cols: no inputs");
  Tape<S>* t = parts.front().tape;
  Eigen::Index width = 0;
  bool need = false;
  std::vector<int> ids;
  for (const auto& p : parts) {
    require(p.tape == t, ErrorKind::internal, "operands recorded on different tapes");
    require(p.rows() == parts.front().rows(), ErrorKind::shape, "concat_cols: row count mismatch");
    width += p.cols();
    need = need || t->requires_grad(p.id);
    ids.push_back(p.id);
  }
  Tensor<S> out = detail::matrix_tensor<S>(parts.front().rows(), width);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.mat().middleCols(at, p.cols()) = p.value().mat();
    at += p.cols();
  }
  return t->push(std::move(out), need, [t, ids = std::move(ids)](int self) {
    Eigen::Index at = 0;
    for (int id : ids) {
      const Eigen::Index w = t->value(id).cols();
      if (t->requires_grad(id)) t->grad(id).mat() += t->grad(self).mat().middleCols(at, w);
      at += w;
    }
  });
}

/// Sum of all elements, as a scalar.
template <class S>
Var<S> sum(Var<S> x) {
  Tape<S>* t = x.tape;
  Tensor<S> out(Shape{});
  out[0] = x.value().mat().sum();
  const int xid = x.id;
  return t->push(std::move(out), t->requires_grad(xid),
                 [t, xid](int self) { t->grad(xid).mat().array() += t->grad(self)[0]; });
}

/// Sum of x * weights (weights constant), as a scalar.
template <class S>
Var<S> weighted_sum(Var<S> x, const Tensor<S>& weights) {
  Tape<S>* t = x.tape;
  require(weights.size() == x.value().size(), ErrorKind::shape, "weighted_sum: size mismatch");
  Tensor<S> out(Shape{});
  S acc = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) acc += x.value()[i] * weights[i];
  out[0] = acc;
  const int xid = x.id;
  return t->push(std::move(out), t->requires_grad(xid), [t, xid, weights](int self) {
    auto& g = t->grad(xid);
    const S dy = t->grad(self)[0];
    for (std::size_t i = 0; i < weights.size(); ++i) g[i] += dy * weights[i];
  });
}

/// Mean binary cross-entropy on logits:
/// max(z, 0) - z*y + log(1 + exp(-|z|)).
template <class S>
Var<S> bce_with_logits(Var<S> logits, const std::vector<S>& targets) {
  Tape<S>* t = logits.tape;
  const auto& z = logits.value();
  require(z.size() == targets.size(), ErrorKind::shape,
          "bce_with_logits: " + std::to_string(z.size()) + " logits vs " + std::to_string(targets.size()) + " targets");
  require(!targets.empty(), ErrorKind::argument, "bce_with_logits: empty input");
  S acc = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const S y = targets[i];
    require(y == S(0) || y == S(1), ErrorKind::argument, "bce_with_logits: targets must be 0 or 1");
    const S zi = z[i];
    acc += std::max(zi, S(0)) - zi * y + std::log1p(std::exp(-std::abs(zi)));
  }
  Tensor<S> out(Shape{});
  out[0] = acc / static_cast<S>(targets.size());
  const int zid = logits.id;
  return t->push(std::move(out), t->requires_grad(zid), [t, zid, targets](int self) {
    auto& g = t->grad(zid);
    const auto& z = t->value(zid);
    const S scale = t->grad(self)[0] / static_cast<S>(targets.size());
    for (std::size_t i = 0; i < targets.size(); ++i) g[i] += scale * (detail::sigmoid(z[i]) - targets[i]);
  });
}

/// One LSTM direction over x (T x in). Gates are packed [input, forget,
/// cell, output] along the 4H axis of w_ih (4H x in), w_hh (4H x H) and
/// bias (4H). Zero initial state. With `reverse`, time runs T-1 .. 0 and
/// outputs stay at their original frame index.
template <class S>
Var<S> lstm(Var<S> x, Var<S> w_ih, Var<S> w_hh, Var<S> bias, bool reverse) {
  Tape<S>* t = x.tape;
  const auto X = x.value().mat();
  const auto Wih = w_ih.value().mat();
  const auto Whh = w_hh.value().mat();
  const Eigen::Index hidden = Whh.cols();
  const Eigen::Index len = X.rows();
  require(Wih.rows() == 4 * hidden && Whh.rows() == 4 * hidden && Wih.cols() == X.cols() &&
              bias.value().size() == static_cast<std::size_t>(4 * hidden),
          ErrorKind::shape, "lstm: weight shapes inconsistent with input width / hidden size");

  RowMatrix<S> gates(len, 4 * hidden);  // pre-activations, then activations in place
  gates.noalias() = X * Wih.transpose();
  gates.rowwise() += bias.value().mat().row(0);
  RowMatrix<S> cell(len, hidden);
  RowMatrix<S> h_prev = RowMatrix<S>::Zero(len, hidden);  // state entering step t
  Tensor<S> out = detail::matrix_tensor<S>(len, hidden);
  auto H = out.mat();

  Eigen::Matrix<S, 1, Eigen::Dynamic> h = Eigen::Matrix<S, 1, Eigen::Dynamic>::Zero(hidden);
  Eigen::Matrix<S, 1, Eigen::Dynamic> c = Eigen::Matrix<S, 1, Eigen::Dynamic>::Zero(hidden);
  for (Eigen::Index step = 0; step < len; ++step) {
    const Eigen::Index f = reverse ? len - 1 - step : step;
    h_prev.row(f) = h;
    auto a = gates.row(f);
    a.noalias() += h * Whh.transpose();
    for (Eigen::Index j = 0; j < hidden; ++j) {
      a[j] = detail::sigmoid(a[j]);
      a[hidden + j] = detail::sigmoid(a[hidden + j]);
      a[2 * hidden + j] = std::tanh(a[2 * hidden + j]);
      a[3 * hidden + j] = detail::sigmoid(a[3 * hidden + j]);
      c[j] = a[hidden + j] * c[j] + a[j] * a[2 * hidden + j];
      h[j] = a[3 * hidden + j] * std::tanh(c[j]);
    }
    cell.row(f) = c;
    H.row(f) = h;
  }

  const int xid = x.id, iid = w_ih.id, hid = w_hh.id, bid = bias.id;
  const bool need = detail::any_grad(t, {xid, iid, hid, bid});
  if (!need) return t->push(std::move(out), false, {});
  return t->push(std::move(out), true,
                 [t, xid, iid, hid, bid, reverse, hidden, len, gates = std::move(gates), cell = std::move(cell),
                  h_prev = std::move(h_prev)](int self) {
                   const auto dH = t->grad(self).mat();
                   const auto Whh = t->value(hid).mat();
                   RowMatrix<S> dA(len, 4 * hidden);
                   Eigen::Matrix<S, 1, Eigen::Dynamic> dh_rec = Eigen::Matrix<S, 1, Eigen::Dynamic>::Zero(hidden);
                   Eigen::Matrix<S, 1, Eigen::Dynamic> dc_rec = Eigen::Matrix<S, 1, Eigen::Dynamic>::Zero(hidden);
                   for (Eigen::Index step = len - 1; step >= 0; --step) {
                     const Eigen::Index f = reverse ? len - 1 - step : step;
                     const Eigen::Index prev = reverse ? f + 1 : f - 1;
                     const bool has_prev = step > 0;
                     const auto g = gates.row(f);
                     for (Eigen::Index j = 0; j < hidden; ++j) {
                       const S i_g = g[j], f_g = g[hidden + j], c_g = g[2 * hidden + j], o_g = g[3 * hidden + j];
                       const S tc = std::tanh(cell(f, j));
                       const S dh = dH(f, j) + dh_rec[j];
                       const S dc = dh * o_g * (S(1) - tc * tc) + dc_rec[j];
                       const S c_before = has_prev ? cell(prev, j) : S(0);
                       dA(f, j) = dc * c_g * i_g * (S(1) - i_g);
                       dA(f, hidden + j) = dc * c_before * f_g * (S(1) - f_g);
                       dA(f, 2 * hidden + j) = dc * i_g * (S(1) - c_g * c_g);
                       dA(f, 3 * hidden + j) = dh * tc * o_g * (S(1) - o_g);
                       dc_rec[j] = dc * f_g;
                     }
                     dh_rec.noalias() = dA.row(f) * Whh;
                   }
                   if (t->requires_grad(hid)) t->grad(hid).mat().noalias() += dA.transpose() * h_prev;
                   if (t->requires_grad(iid)) t->grad(iid).mat().noalias() += dA.transpose() * t->value(xid).mat();
                   if (t->requires_grad(bid)) t->grad(bid).mat().row(0) += dA.colwise().sum();
                   if (t->requires_grad(xid)) t->grad(xid).mat().noalias() += dA * t->value(iid).mat();
                 });
}

}  // namespace spliceguard::nn
