#include <gtest/gtest.h>

#include "oracles.hpp"
#include "spliceguard/nn/gradcheck.hpp"
#include "spliceguard/nn/layers.hpp"

using namespace spliceguard;
using namespace spliceguard::nn;

namespace {

Var<double> project(Var<double> y, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<double> w(y.value().shape);
  for (auto& v : w.data) v = rng.uniform(-1.0, 1.0);
  return weighted_sum(y, w);
}

template <class S>
ParameterSet<S> attention_params(std::size_t d, std::uint64_t seed) {
  ParameterSet<S> ps;
  add_attention_params(ps, "attn", d);
  Rng rng(seed);
  oracle::randomize(ps, rng, 0.5);
  return ps;
}

template <class S>
ParameterSet<S> bilstm_params(std::size_t in, std::size_t hidden, std::uint64_t seed) {
  ParameterSet<S> ps;
  add_bilstm_params(ps, "lstm", in, hidden);
  Rng rng(seed);
  oracle::randomize(ps, rng, 0.5);
  return ps;
}

}  // namespace

TEST(Attention, MatchesPairwiseOracle) {
  for (int heads : {1, 2, 4}) {
    auto ps64 = attention_params<double>(8, 100 + heads);
    auto ps32 = ps64.cast<float>();
    Rng rng(7);
    auto x64 = oracle::random_tensor<double>({5, 8}, rng);
    auto x32 = x64.cast<float>();

    Tape<double> t64(false);
    auto y64 = multi_head_self_attention(t64, ps64, "attn", t64.constant(x64), heads);
    EXPECT_LT(oracle::max_abs_diff(oracle::attention(oracle::to_grid(x64), ps64, "attn", heads), y64.value()), 1e-12);

    Tape<float> t32(false);
    auto y32 = multi_head_self_attention(t32, ps32, "attn", t32.constant(x32), heads);
    EXPECT_LT(oracle::max_abs_diff(oracle::attention(oracle::to_grid(x32), ps32, "attn", heads), y32.value()), 1e-6);
  }
}

TEST(Attention, SingletonSequenceIsValueProjectionChain) {
  auto ps = attention_params<double>(8, 3);
  Rng rng(4);
  auto x = oracle::random_tensor<double>({1, 8}, rng);
  Tape<double> tape(false);
  auto y = multi_head_self_attention(tape, ps, "attn", tape.constant(x), 2);
  const auto row = oracle::to_grid(x)[0];
  const auto v = oracle::affine_row(row, ps.value("attn.wv"), ps.value("attn.bv"));
  const auto expected = oracle::affine_row(v, ps.value("attn.wo"), ps.value("attn.bo"));
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(y.value()[i], expected[i], 1e-12);
}

TEST(Attention, PermutationEquivariant) {
  auto ps = attention_params<double>(8, 5);
  Rng rng(6);
  auto x = oracle::random_tensor<double>({6, 8}, rng);
  std::vector<std::size_t> perm = {3, 0, 5, 1, 4, 2};
  Tensor<double> xp({6, 8});
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t c = 0; c < 8; ++c) xp.data[r * 8 + c] = x.data[perm[r] * 8 + c];
  Tape<double> tape(false);
  auto y = multi_head_self_attention(tape, ps, "attn", tape.constant(x), 2);
  auto yp = multi_head_self_attention(tape, ps, "attn", tape.constant(xp), 2);
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(yp.value().data[r * 8 + c], y.value().data[perm[r] * 8 + c], 1e-12);
}

TEST(Attention, HeadsMustDivideWidth) {
  auto ps = attention_params<double>(6, 1);
  Tape<double> tape(false);
  try {
    multi_head_self_attention(tape, ps, "attn", tape.constant(Tensor<double>({2, 6})), 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
  }
}

TEST(Attention, GradientCheck) {
  auto ps = attention_params<double>(8, 9);
  ps.add("x", {4, 8});
  Rng rng(10);
  for (auto& v : ps.value("x").data) v = rng.uniform(-1.0, 1.0);
  auto res = finite_difference_check(ps, [](Tape<double>& t, const ParameterSet<double>& p) {
    return project(multi_head_self_attention(t, p, "attn", t.parameter(p, "x"), 2), 1);
  });
  EXPECT_LT(res.max_rel_error, 1e-4) << res.worst_param << "[" << res.worst_index << "]";
}

TEST(EncoderLayer, GradientCheckAndShape) {
  ParameterSet<double> ps;
  add_encoder_layer_params(ps, "enc", 8, 16);
  Rng rng(11);
  oracle::randomize(ps, rng, 0.5);
  for (auto& p : ps)
    if (p.name.ends_with(".gain"))
      for (auto& v : p.value.data) v = 1.0 + 0.2 * rng.uniform(-1.0, 1.0);
  ps.add("x", {4, 8});
  for (auto& v : ps.value("x").data) v = rng.uniform(-1.0, 1.0);
  {
    Tape<double> tape(false);
    auto y = transformer_encoder_layer(tape, ps, "enc", tape.parameter(ps, "x"), 2);
    EXPECT_EQ(y.rows(), 4);
    EXPECT_EQ(y.cols(), 8);
  }
  auto res = finite_difference_check(ps, [](Tape<double>& t, const ParameterSet<double>& p) {
    return project(transformer_encoder_layer(t, p, "enc", t.parameter(p, "x"), 2), 2);
  });
  EXPECT_LT(res.max_rel_error, 1e-4) << res.worst_param << "[" << res.worst_index << "] ad=" << res.worst_analytic
                                     << " fd=" << res.worst_numeric;
}

TEST(Lstm, MatchesGateEquationOracle) {
  auto ps64 = bilstm_params<double>(4, 3, 12);
  auto ps32 = ps64.cast<float>();
  Rng rng(13);
  auto x64 = oracle::random_tensor<double>({6, 4}, rng);
  auto x32 = x64.cast<float>();
  for (bool reverse : {false, true}) {
    const std::string dir = reverse ? "lstm.bwd" : "lstm.fwd";
    Tape<double> t64(false);
    auto y64 = lstm(t64.constant(x64), t64.parameter(ps64, dir + ".w_ih"), t64.parameter(ps64, dir + ".w_hh"),
                    t64.parameter(ps64, dir + ".bias"), reverse);
    auto ref64 = oracle::lstm(oracle::to_grid(x64), ps64.value(dir + ".w_ih"), ps64.value(dir + ".w_hh"),
                              ps64.value(dir + ".bias"), reverse);
    EXPECT_LT(oracle::max_abs_diff(ref64, y64.value()), 1e-12);

    Tape<float> t32(false);
    auto y32 = lstm(t32.constant(x32), t32.parameter(ps32, dir + ".w_ih"), t32.parameter(ps32, dir + ".w_hh"),
                    t32.parameter(ps32, dir + ".bias"), reverse);
    auto ref32 = oracle::lstm(oracle::to_grid(x32), ps32.value(dir + ".w_ih"), ps32.value(dir + ".w_hh"),
                              ps32.value(dir + ".bias"), reverse);
    EXPECT_LT(oracle::max_abs_diff(ref32, y32.value()), 1e-6);
  }
}

TEST(BiLstm, ZeroWeightsGiveZeroOutput) {
  ParameterSet<float> ps;
  add_bilstm_params(ps, "lstm", 4, 3);
  Rng rng(14);
  Tape<float> tape(false);
  auto y = bilstm(tape, ps, "lstm", tape.constant(oracle::random_tensor<float>({5, 4}, rng)));
  EXPECT_EQ(y.cols(), 6);
  for (float v : y.value().data) EXPECT_EQ(v, 0.0f);
}

TEST(BiLstm, SingletonDirectionsAgreeWithSharedWeights) {
  auto ps = bilstm_params<double>(4, 3, 15);
  for (const char* n : {".w_ih", ".w_hh", ".bias"}) ps.value(std::string("lstm.bwd") + n) = ps.value(std::string("lstm.fwd") + n);
  Rng rng(16);
  Tape<double> tape(false);
  auto y = bilstm(tape, ps, "lstm", tape.constant(oracle::random_tensor<double>({1, 4}, rng)));
  for (int j = 0; j < 3; ++j) EXPECT_EQ(y.value()[j], y.value()[3 + j]);
}

TEST(BiLstm, GradientCheck) {
  auto ps = bilstm_params<double>(4, 3, 17);
  ps.add("x", {3, 4});
  Rng rng(18);
  for (auto& v : ps.value("x").data) v = rng.uniform(-1.0, 1.0);
  auto res = finite_difference_check(ps, [](Tape<double>& t, const ParameterSet<double>& p) {
    return project(bilstm(t, p, "lstm", t.parameter(p, "x")), 3);
  });
  EXPECT_EQ(res.coords_checked, ps.element_count());
  EXPECT_LT(res.max_rel_error, 1e-4) << res.worst_param << "[" << res.worst_index << "]";
}

TEST(Positional, SinusoidTable) {
  auto pe = sinusoidal_positions<double>(3, 4);
  EXPECT_DOUBLE_EQ(pe.data[0], 0.0);
  EXPECT_DOUBLE_EQ(pe.data[1], 1.0);
  EXPECT_NEAR(pe.data[4], std::sin(1.0), 1e-15);
  EXPECT_NEAR(pe.data[6], std::sin(1.0 / 100.0), 1e-15);
  EXPECT_NEAR(pe.data[7], std::cos(1.0 / 100.0), 1e-15);
}
