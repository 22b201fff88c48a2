#include <gtest/gtest.h>

#include <cmath>

#include "pipeline_oracles.hpp"
#include "spliceguard/inference.hpp"
#include "spliceguard/training.hpp"

using namespace spliceguard;

namespace {

std::vector<double> uniform_values(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform();
  return v;
}

}  // namespace

TEST(PlanChunks, SingleAndDoubleLength) {
  EXPECT_EQ(plan_chunks(100, 100).starts, std::vector<std::int64_t>{0});
  EXPECT_EQ(plan_chunks(40, 100).starts, std::vector<std::int64_t>{0});
  EXPECT_EQ(plan_chunks(200, 100, 0.5).starts, (std::vector<std::int64_t>{0, 50, 100}));
  EXPECT_EQ(plan_chunks(230, 100, 0.5).starts, (std::vector<std::int64_t>{0, 50, 100, 130}));
  EXPECT_THROW(plan_chunks(10, 0), Error);
}

TEST(PlanChunks, CoverageSweep) {
  for (std::int64_t n = 1; n <= 700; n += 7)
    for (double ov : {0.0, 0.25, 0.5, 0.75})
      for (std::int64_t len : {1, 13, 64, 126}) {
        const auto plan = plan_chunks(n, len, ov);
        std::vector<int> cover(static_cast<std::size_t>(n), 0);
        for (std::size_t c = 0; c < plan.starts.size(); ++c) {
          if (c > 0) {
            EXPECT_GT(plan.starts[c], plan.starts[c - 1]);
            EXPECT_LE(plan.starts[c] - plan.starts[c - 1], plan.stride());
          }
          for (std::int64_t j = plan.starts[c]; j < std::min(n, plan.starts[c] + len); ++j) ++cover[j];
        }
        for (int k : cover) ASSERT_GE(k, 1) << n << " " << len << " " << ov;
        EXPECT_GE(plan.starts.back() + len, n);
        if (n >= len) EXPECT_EQ(plan.starts.back() + len, n);
      }
}

TEST(Merge, OneChunkAndConstantOverlap) {
  const auto plan1 = plan_chunks(5, 5);
  const std::vector<double> p{0.1, 0.2, 0.3, 0.4, 0.5};
  EXPECT_EQ(merge_chunk_probs({p}, plan1, 5), p);

  const auto plan = plan_chunks(8, 4, 0.5);
  ASSERT_EQ(plan.starts.size(), 3u);
  const auto m = merge_chunk_probs({std::vector<double>(4, 0.2), std::vector<double>(4, 0.6), std::vector<double>(4, 0.2)},
                                   plan, 8);
  EXPECT_DOUBLE_EQ(m[0], 0.2);
  EXPECT_DOUBLE_EQ(m[2], 0.4);
  EXPECT_DOUBLE_EQ(m[3], 0.4);
}

TEST(Merge, ConstantProbabilityIsPreserved) {
  for (std::int64_t n : {3, 50, 333}) {
    const auto plan = plan_chunks(n, 40, 0.75);
    std::vector<std::vector<double>> outs(plan.starts.size(), std::vector<double>(40, 0.37));
    for (double v : merge_chunk_probs(outs, plan, n)) EXPECT_EQ(v, 0.37);
  }
}

TEST(Merge, RandomPlansMatchOracle) {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const std::int64_t n = rng.uniform_int(100, 3000);
    const std::int64_t len = 126;
    const double ov = std::vector<double>{0.25, 0.5, 0.75}[trial % 3];
    const auto plan = plan_chunks(n, len, ov);
    std::vector<std::vector<double>> outs;
    for (std::size_t c = 0; c < plan.starts.size(); ++c) outs.push_back(uniform_values(len, rng.next_u64()));
    const auto got = merge_chunk_probs(outs, plan, n);
    const auto want = oracle::merge(outs, plan.starts, n);
    for (std::int64_t i = 0; i < n; ++i) ASSERT_NEAR(got[i], want[i], 1e-12);
  }
}

TEST(Merge, Errors) {
  const auto plan = plan_chunks(10, 4);
  EXPECT_THROW(merge_chunk_probs({}, plan, 10), Error);
  ChunkPlan bad{{20}, 4, 0.5, 10};
  try {
    merge_chunk_probs({std::vector<double>(4, 0.0)}, bad, 10);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::internal);
  }
}

TEST(DetectBoundaries, Examples) {
  EXPECT_TRUE(detect_boundaries({0.1, 0.2, 0.3}, 0.5).empty());
  EXPECT_EQ(detect_boundaries({0.1, 0.9, 0.95, 0.2}, 0.5), std::vector<std::int64_t>{2});
  EXPECT_EQ(detect_boundaries({0.9, 0.9, 0.1, 0.7}, 0.5), (std::vector<std::int64_t>{0, 3}));
  EXPECT_TRUE(detect_boundaries({0.5, 0.5}, 0.5).empty());
  EXPECT_THROW(detect_boundaries({0.1}, 1.5), Error);
}

TEST(DetectBoundaries, MatchesRunScanOracle) {
  Rng rng(2);
  for (int trial = 0; trial < 300; ++trial) {
    auto p = uniform_values(static_cast<std::size_t>(rng.uniform_int(0, 200)), rng.next_u64());
    if (trial % 3 == 0)
      for (auto& v : p) v = std::round(v * 4) / 4;  // force ties
    const double thr = rng.uniform();
    EXPECT_EQ(detect_boundaries(p, thr), oracle::runs(p, thr));
  }
}

TEST(DetectBoundaries, ThresholdMovesWithoutCrossingChangeNothing) {
  const auto p = uniform_values(300, 4);
  std::vector<double> sorted = p;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t k = 0; k + 1 < sorted.size(); k += 17) {
    const double lo = sorted[k], hi = sorted[k + 1];
    EXPECT_EQ(detect_boundaries(p, lo), detect_boundaries(p, lo + 0.5 * (hi - lo)));
  }
}

TEST(UtteranceScore, Examples) {
  EXPECT_DOUBLE_EQ(utterance_score({0.9, 0.8, 0.7, 0.6, 0.5}), 0.75);
  EXPECT_EQ(utterance_score(std::vector<double>(10, 0.0)), 0.0);
  EXPECT_DOUBLE_EQ(utterance_score({0.2, 0.4}), 0.3);
  EXPECT_THROW(utterance_score({}), Error);
}

TEST(UtteranceScore, MatchesSortOracleAndIsMonotone) {
  Rng rng(5);
  const auto p = uniform_values(1000, 6);
  EXPECT_NEAR(utterance_score(p), oracle::top_mean(p, 4), 1e-12);
  for (int trial = 0; trial < 200; ++trial) {
    auto q = uniform_values(static_cast<std::size_t>(rng.uniform_int(1, 30)), rng.next_u64());
    const double before = utterance_score(q);
    q[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(q.size()) - 1))] += rng.uniform();
    EXPECT_GE(utterance_score(q), before);
  }
}

TEST(Eer, Examples) {
  EXPECT_EQ(compute_eer({0.1, 0.2}, {0.8, 0.9}).eer, 0.0);
  EXPECT_DOUBLE_EQ(compute_eer({0.5, 0.5, 0.5}, {0.5, 0.5}).eer, 0.5);
  EXPECT_DOUBLE_EQ(compute_eer({0.8, 0.9}, {0.1, 0.2}).eer, 1.0);
  EXPECT_THROW(compute_eer({}, {0.5}), Error);
  EXPECT_THROW(compute_eer({0.5}, {}), Error);
  const auto e = compute_eer({0.1, 0.2}, {0.8, 0.9});
  EXPECT_GE(e.threshold, 0.2);
  EXPECT_LT(e.threshold, 0.8);
}

TEST(Eer, MatchesExhaustiveSweep) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> g, f;
    for (int i = 0; i < 1000; ++i) {
      g.push_back(rng.normal());
      f.push_back(rng.normal() + 1.0);
    }
    if (trial % 4 == 0)
      for (auto* v : {&g, &f})
        for (auto& x : *v) x = std::round(x * 5) / 5;  // heavy ties
    EXPECT_NEAR(compute_eer(g, f).eer, oracle::eer(g, f), 1e-9);
  }
}

TEST(Eer, SymmetryAndRankInvariance) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> g, f;
    for (int i = 0; i < 200; ++i) g.push_back(rng.uniform() * 0.7);
    for (int i = 0; i < 150; ++i) f.push_back(0.3 + rng.uniform() * 0.7);
    const double base = compute_eer(g, f).eer;
    std::vector<double> g2, f2, g3, f3;
    for (double x : f) g2.push_back(1 - x);
    for (double x : g) f2.push_back(1 - x);
    EXPECT_NEAR(compute_eer(g2, f2).eer, base, 1e-12);
    for (double x : g) g3.push_back(std::exp(3 * x) + 2);
    for (double x : f) f3.push_back(std::exp(3 * x) + 2);
    EXPECT_NEAR(compute_eer(g3, f3).eer, base, 1e-12);
  }
}

TEST(Localization, Examples) {
  const auto same = localization_metrics({10, 50, 90}, {10, 50, 90});
  EXPECT_EQ(same.precision(), 1.0);
  EXPECT_EQ(same.recall(), 1.0);
  EXPECT_EQ(same.f1(), 1.0);
  const auto none = localization_metrics({}, {5});
  EXPECT_EQ(none.precision(), 0.0);
  EXPECT_EQ(none.recall(), 0.0);
  EXPECT_EQ(none.f1(), 0.0);
  const auto far = localization_metrics({0}, {6}, 5);
  EXPECT_EQ(far.matched, 0);
  const auto one_to_one = localization_metrics({10, 11}, {10}, 5);
  EXPECT_EQ(one_to_one.matched, 1);
  EXPECT_DOUBLE_EQ(one_to_one.precision(), 0.5);
  EXPECT_THROW(localization_metrics({}, {}, -1), Error);
}

TEST(Localization, GreedyAgainstOptimalAssignment) {
  // Greedy closest-first can lose a match when a prediction sits between
  // two truths (e.g. p={2,5}, t={3,0}, tol=2). It never exceeds the
  // optimum, and equals it when truths are farther apart than 2*tol.
  const auto counter = localization_metrics({2, 5}, {3, 0}, 2);
  EXPECT_EQ(counter.matched, 1);
  EXPECT_EQ(oracle::optimal_matches({2, 5}, {3, 0}, 2), 2);

  Rng rng(9);
  int differ = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<std::int64_t> p, t;
    const auto np = rng.uniform_int(0, 5), nt = rng.uniform_int(0, 5);
    for (int i = 0; i < np; ++i) p.push_back(rng.uniform_int(0, 60));
    for (int i = 0; i < nt; ++i) t.push_back(rng.uniform_int(0, 60));
    const auto greedy = localization_metrics(p, t, 5).matched;
    const auto best = oracle::optimal_matches(p, t, 5);
    EXPECT_LE(greedy, best);
    differ += greedy != best;

    std::vector<std::int64_t> spaced, noisy;
    for (int i = 0; i < 5; ++i) {
      spaced.push_back(i * 11 + rng.uniform_int(0, 0));
      if (rng.bernoulli(0.7)) noisy.push_back(spaced.back() + rng.uniform_int(-5, 5));
    }
    EXPECT_EQ(localization_metrics(noisy, spaced, 5).matched, oracle::optimal_matches(noisy, spaced, 5));
  }
  RecordProperty("greedy_suboptimal_cases", differ);
}

TEST(Report, PerfectStubGivesZeroEerAndRoundTrips) {
  std::vector<UtteranceResult> results;
  for (int i = 0; i < 4; ++i) {
    UtteranceResult r;
    r.id = "u" + std::to_string(i);
    r.cls = i < 2 ? UtteranceClass::genuine : UtteranceClass::partially_fake;
    r.probs.assign(50, 0.01 + 0.001 * i);
    if (i >= 2) {
      r.true_boundaries = {20};
      for (int f = 18; f <= 22; ++f) r.probs[f] = 0.9 - 0.01 * std::abs(f - 20);
    }
    results.push_back(r);
  }
  InferenceConfig cfg;
  const auto rep = score_results(results, cfg, {{"note", "stub"}});
  ASSERT_TRUE(rep.metrics.eer.has_value());
  EXPECT_EQ(*rep.metrics.eer, 0.0);
  EXPECT_EQ(rep.metrics.localization.recall(), 1.0);
  EXPECT_EQ(rep.metrics.localization.precision(), 1.0);
  EXPECT_EQ(rep.utterances[2].boundaries, std::vector<std::int64_t>{20});

  const auto text = encode_report(rep);
  const auto back = decode_report(text);
  EXPECT_EQ(encode_report(back), text);
  EXPECT_EQ(back.utterances[3].probs, rep.utterances[3].probs);
  EXPECT_EQ(back.metrics.eer, rep.metrics.eer);
  EXPECT_EQ(back.config.at("note"), "stub");
  EXPECT_NE(det_csv(rep).find("threshold,far,frr\n-inf,1,0\n"), std::string::npos);

  std::vector<UtteranceResult> genuine_only(results.begin(), results.begin() + 2);
  const auto partial = score_results(genuine_only, cfg);
  EXPECT_FALSE(partial.metrics.eer.has_value());
  EXPECT_EQ(decode_report(encode_report(partial)).metrics.eer, std::nullopt);
  EXPECT_THROW(decode_report("{}"), Error);
}

TEST(Inference, ChunkedMatchesWholeForShortAndLongInputs) {
  Detector<float> det(DetectorConfig::toy());
  det.initialize(2);
  Rng rng(3);
  FeatureMatrix fm;
  fm.values.resize(300, 240);
  for (Eigen::Index i = 0; i < fm.values.size(); ++i) fm.values.data()[i] = static_cast<float>(rng.normal());
  // One chunk covering everything equals a plain forward pass.
  const auto whole = det.probabilities(fm.values);
  const auto single = chunked_probabilities(det, fm, 300, 0.5);
  for (std::size_t i = 0; i < whole.size(); ++i) EXPECT_NEAR(single[i], whole[i], 1e-7);
  EXPECT_EQ(chunked_probabilities(det, fm, 126, 0.5).size(), 300u);
  // Short input is wrapped to a full chunk; only its own frames come back.
  FeatureMatrix shortfm;
  shortfm.values = fm.values.topRows(40);
  RowMatrix<float> tiled(126, 240);
  for (int j = 0; j < 126; ++j) tiled.row(j) = shortfm.values.row(j % 40);
  const auto tiled_probs = det.probabilities(tiled);
  const auto short_probs = chunked_probabilities(det, shortfm, 126, 0.5);
  ASSERT_EQ(short_probs.size(), 40u);
  for (int j = 0; j < 40; ++j) EXPECT_EQ(short_probs[j], static_cast<double>(tiled_probs[j]));
}

TEST(Inference, ChunkFrameCounts) {
  EXPECT_EQ(chunk_frames(1.28, FeatureKind::fbank240, FbankConfig{}), 126);
  EXPECT_EQ(chunk_frames(0.64, FeatureKind::fbank240, FbankConfig{}), 62);
  EXPECT_EQ(chunk_frames(2.56, FeatureKind::fbank240, FbankConfig{}), 254);
  EXPECT_EQ(chunk_frames(1.28, FeatureKind::external, FbankConfig{}), 64);
}

TEST(Inference, EvaluateIsDeterministicAcrossWorkers) {
  ToyCorpusConfig cc;
  cc.num_utterances = 6;
  auto recs = generate_toy_corpus(cc, 4);
  Rng rng(1);
  auto spliced = build_training_pool(std::span(recs).subspan(0, 3), std::span(recs).subspan(3), 1, rng);
  recs.insert(recs.end(), spliced.begin(), spliced.begin() + 3);
  Detector<float> det(DetectorConfig::toy());
  det.initialize(9);
  InferenceConfig cfg;
  cfg.workers = 1;
  const auto a = encode_report(evaluate(det, recs, cfg));
  cfg.workers = 3;
  const auto b = encode_report(evaluate(det, recs, cfg));
  EXPECT_EQ(a, b);
  EXPECT_EQ(decode_report(a).utterances.size(), 9u);
}

TEST(Training, RejectsSingleClassPool) {
  ToyCorpusConfig cc;
  cc.num_utterances = 3;
  const auto recs = generate_toy_corpus(cc, 1);
  TrainingPool pool(recs);
  auto val = recs;
  val[0].cls = UtteranceClass::partially_fake;
  TrainConfig tc;
  try {
    train(tc, pool, val, DetectorConfig::toy());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
  }
}

TEST(Training, ShortRunIsDeterministicAndResumable) {
  ToyCorpusConfig cc;
  cc.num_utterances = 12;
  const auto genuine = generate_toy_corpus(cc, 1);
  ToyCorpusConfig fc = cc;
  fc.num_utterances = 3;
  fc.family = ToyFamily::filtered_noise;
  fc.cls = UtteranceClass::fully_fake;
  fc.id_prefix = "fake";
  const auto fakes = generate_toy_corpus(fc, 2);
  Rng rng(3);
  const auto spliced = build_training_pool(std::span(genuine).first(8), fakes, 1, rng);
  std::vector<UtteranceRecord> train_recs(genuine.begin(), genuine.begin() + 8);
  train_recs.insert(train_recs.end(), spliced.begin(), spliced.end());
  TrainingPool pool(train_recs);
  std::vector<UtteranceRecord> val(genuine.begin() + 8, genuine.end());
  val.push_back(spliced.front());
  val.push_back(spliced.back());

  auto model = DetectorConfig::toy();
  model.channels = 8;
  model.emb_dim = 8;
  model.ffn = 16;
  model.lstm_hidden = 4;
  TrainConfig tc;
  tc.batch = 2;
  tc.epochs = 2;
  tc.steps_per_epoch = 3;
  tc.validate_every = 2;
  tc.keep_best = 2;
  tc.chunk_len = 0.64;
  tc.lr = 1e-3;
  tc.warmup = 2;
  const auto a = train(tc, pool, val, model);
  const auto b = train(tc, pool, val, model);
  EXPECT_EQ(training_log_csv(a.log), training_log_csv(b.log));
  EXPECT_EQ(a.log.size(), 6u);
  EXPECT_EQ(a.retained.size(), 2u);
  EXPECT_EQ(nn::encode_checkpoint(a.last), nn::encode_checkpoint(b.last));
  for (const auto& row : a.log) EXPECT_EQ(row.val_eer.has_value(), row.step % 2 == 0);

  // Resuming from step 3 of a 3-step run replays steps 4..6 identically.
  TrainConfig first = tc;
  first.epochs = 1;
  const auto half = train(first, pool, val, model);
  EXPECT_EQ(half.last.step, 3);
  const auto rest = train(tc, pool, val, model, {}, &half.last);
  ASSERT_EQ(rest.log.size(), 3u);
  EXPECT_EQ(rest.log.front().step, 4);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(format_log_row(rest.log[i]), format_log_row(a.log[3 + i]));
  for (std::size_t p = 0; p < a.last.params.size(); ++p)
    EXPECT_EQ(rest.last.params[p].value.data, a.last.params[p].value.data);

  // More workers, same bytes.
  tc.workers = 2;
  const auto c = train(tc, pool, val, model);
  EXPECT_EQ(nn::encode_checkpoint(c.last), nn::encode_checkpoint(a.last));
}
