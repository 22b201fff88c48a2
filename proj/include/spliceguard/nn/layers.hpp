#pragma once

#include <cmath>
#include <string>

#include "spliceguard/nn/ops.hpp"

namespace spliceguard::nn {

// Layer builders. Each layer owns a name prefix in a ParameterSet; `add_*`
// registers the tensors and the forward function looks them up by name.

/// Query, key, value and output projections. The key projection has no
/// bias: it adds the same amount to every score in a row and cancels in the
/// softmax.
template <class S>
void add_attention_params(ParameterSet<S>& ps, const std::string& prefix, std::size_t d) {
  for (const char* proj : {"q", "k", "v", "o"}) {
    ps.add(prefix + ".w" + proj, {d, d});
    if (proj[0] != 'k') ps.add(prefix + ".b" + proj, {d});
  }
}

/// Unmasked multi-head scaled dot-product self-attention over x (T x d).
template <class S>
Var<S> multi_head_self_attention(Tape<S>& tape, const ParameterSet<S>& ps, const std::string& prefix, Var<S> x,
                                 int heads) {
  const Eigen::Index d = x.cols();
  require(heads >= 1 && d % heads == 0, ErrorKind::config,
          "attention: width " + std::to_string(d) + " not divisible by " + std::to_string(heads) + " heads");
  auto p = [&](const char* name) { return tape.parameter(ps, prefix + name); };
  const Var<S> q = linear(x, p(".wq"), p(".bq"));
  const Var<S> k = linear(x, p(".wk"));
  const Var<S> v = linear(x, p(".wv"), p(".bv"));
  const Eigen::Index dk = d / heads;
  const S inv_sqrt = S(1) / std::sqrt(static_cast<S>(dk));
  std::vector<Var<S>> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const Var<S> qh = slice_cols(q, h * dk, dk);
    const Var<S> kh = slice_cols(k, h * dk, dk);
    const Var<S> vh = slice_cols(v, h * dk, dk);
    const Var<S> weights = softmax_rows(scale(matmul_nt(qh, kh), inv_sqrt));
    outs.push_back(matmul(weights, vh));
  }
  const Var<S> merged = heads == 1 ? outs.front() : concat_cols(outs);
  return linear(merged, p(".wo"), p(".bo"));
}

template <class S>
void add_encoder_layer_params(ParameterSet<S>& ps, const std::string& prefix, std::size_t d, std::size_t ffn) {
  add_attention_params(ps, prefix + ".attn", d);
  ps.add(prefix + ".norm1.gain", {d});
  ps.add(prefix + ".norm1.bias", {d});
  ps.add(prefix + ".ffn.w1", {ffn, d});
  ps.add(prefix + ".ffn.b1", {ffn});
  ps.add(prefix + ".ffn.w2", {d, ffn});
  ps.add(prefix + ".ffn.b2", {d});
  ps.add(prefix + ".norm2.gain", {d});
  ps.add(prefix + ".norm2.bias", {d});
}

/// Post-norm encoder layer: x = LN(x + MHA(x)); x = LN(x + FFN(x)).
template <class S>
Var<S> transformer_encoder_layer(Tape<S>& tape, const ParameterSet<S>& ps, const std::string& prefix, Var<S> x,
                                 int heads) {
  auto p = [&](const std::string& name) { return tape.parameter(ps, prefix + name); };
  Var<S> h = add(x, multi_head_self_attention(tape, ps, prefix + ".attn", x, heads));
  h = layer_norm(h, p(".norm1.gain"), p(".norm1.bias"));
  const Var<S> f = linear(relu(linear(h, p(".ffn.w1"), p(".ffn.b1"))), p(".ffn.w2"), p(".ffn.b2"));
  return layer_norm(add(h, f), p(".norm2.gain"), p(".norm2.bias"));
}

template <class S>
void add_lstm_params(ParameterSet<S>& ps, const std::string& prefix, std::size_t input, std::size_t hidden) {
  ps.add(prefix + ".w_ih", {4 * hidden, input});
  ps.add(prefix + ".w_hh", {4 * hidden, hidden});
  ps.add(prefix + ".bias", {4 * hidden});
}

template <class S>
void add_bilstm_params(ParameterSet<S>& ps, const std::string& prefix, std::size_t input, std::size_t hidden) {
  add_lstm_params(ps, prefix + ".fwd", input, hidden);
  add_lstm_params(ps, prefix + ".bwd", input, hidden);
}

/// Single-layer bidirectional LSTM; output row t is [h_fwd(t) | h_bwd(t)].
template <class S>
Var<S> bilstm(Tape<S>& tape, const ParameterSet<S>& ps, const std::string& prefix, Var<S> x) {
  auto dir = [&](const std::string& d, bool reverse) {
    const std::string base = prefix + "." + d;
    return lstm(x, tape.parameter(ps, base + ".w_ih"), tape.parameter(ps, base + ".w_hh"),
                tape.parameter(ps, base + ".bias"), reverse);
  };
  return concat_cols<S>({dir("fwd", false), dir("bwd", true)});
}

/// Sinusoidal absolute position table (T x d).
template <class S>
Tensor<S> sinusoidal_positions(Eigen::Index len, Eigen::Index d) {
  Tensor<S> pe({static_cast<std::size_t>(len), static_cast<std::size_t>(d)});
  auto m = pe.mat();
  for (Eigen::Index t = 0; t < len; ++t) {
    for (Eigen::Index i = 0; i < d; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
      const double angle = static_cast<double>(t) * rate;
      m(t, i) = static_cast<S>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return pe;
}

}  // namespace spliceguard::nn
