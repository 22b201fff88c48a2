#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "spliceguard/corpus.hpp"
#include "spliceguard/inference.hpp"
#include "spliceguard/model.hpp"
#include "spliceguard/nn/optim.hpp"
#include "spliceguard/parallel.hpp"

namespace spliceguard {

struct TrainConfig {
  double chunk_len = 1.28;  // seconds
  int batch = 64;
  int epochs = 10;
  int steps_per_epoch = 100;  // an epoch is a fixed number of sampled batches
  double lr = 1e-4;           // peak of the Noam schedule
  int warmup = 1600;
  double p_genuine = 0.5;
  std::uint64_t seed = 0;
  int validate_every = 100;
  int keep_best = 5;
  int workers = 1;
  double noise_std = 0.0;  // additive white-noise augmentation, off by default
  FeatureKind feature = FeatureKind::fbank240;

  std::int64_t total_steps() const { return static_cast<std::int64_t>(epochs) * steps_per_epoch; }

  void validate() const {
    require(chunk_len > 0, ErrorKind::config, "train: chunk_len must be positive");
    require(batch >= 1, ErrorKind::config, "train: batch must be >= 1");
    require(epochs >= 0 && steps_per_epoch >= 1, ErrorKind::config, "train: epochs >= 0 and steps_per_epoch >= 1 required");
    require(lr > 0 && warmup >= 1, ErrorKind::config, "train: lr must be positive and warmup >= 1");
    require(p_genuine >= 0 && p_genuine <= 1, ErrorKind::config, "train: p_genuine must lie in [0, 1]");
    require(validate_every >= 1, ErrorKind::config, "train: validate_every must be >= 1");
    require(keep_best >= 1, ErrorKind::config, "train: keep_best must be >= 1");
    require(noise_std >= 0, ErrorKind::config, "train: noise_std must be >= 0");
  }
};

struct TrainLogRow {
  std::int64_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
  std::optional<double> val_eer;
};

inline std::string format_log_row(const TrainLogRow& r) {
  char buf[128];
  if (r.val_eer)
    std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g,%.9g", static_cast<long long>(r.step), r.lr, r.loss, *r.val_eer);
  else
    std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g,", static_cast<long long>(r.step), r.lr, r.loss);
  return buf;
}

inline std::string training_log_csv(const std::vector<TrainLogRow>& rows) {
  std::string out = "step,lr,loss,val_eer\n";
  for (const auto& r : rows) out += format_log_row(r) + "\n";
  return out;
}

struct RetainedCheckpoint {
  std::int64_t step = 0;
  double val_eer = 0.0;
  nn::ParameterSet<float> params;
};

struct TrainResult {
  Detector<float> averaged;
  std::vector<RetainedCheckpoint> retained;  // lowest validation EER first
  nn::Checkpoint last;                       // final weights with optimizer state
  std::vector<TrainLogRow> log;
  std::optional<double> averaged_val_eer;
  double threshold = 0.5;  // EER-crossing threshold of the averaged model on validation
};

struct TrainCallbacks {
  std::function<void(const TrainLogRow&)> on_step;
};

namespace train_detail {

struct Sample {
  RowMatrix<float> features;
  std::vector<float> targets;
};

inline void insert_retained(std::vector<RetainedCheckpoint>& kept, RetainedCheckpoint ck, int keep) {
  kept.push_back(std::move(ck));
  // Lower EER first; among equal EERs the later step wins.
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.val_eer != b.val_eer ? a.val_eer < b.val_eer : a.step > b.step;
  });
  if (static_cast<int>(kept.size()) > keep) kept.resize(static_cast<std::size_t>(keep));
}

}  // namespace train_detail

/// Train the detector with BCE on per-frame logits, Adam and a Noam
/// schedule. Every `validate_every` steps (and at the last step) the
/// validation EER is measured; the `keep_best` lowest-EER checkpoints are
/// averaged into the final model. Each step draws its batch from an RNG
/// seeded by (seed, step), so a resumed run replays the same batches.
inline TrainResult train(const TrainConfig& cfg, const TrainingPool& pool, const std::vector<UtteranceRecord>& validation,
                         const DetectorConfig& model, const FbankConfig& fbank = {},
                         const nn::Checkpoint* resume = nullptr, const TrainCallbacks& callbacks = {}) {
  cfg.validate();
  require(!pool.genuine().empty() && !pool.spliced().empty(), ErrorKind::config,
          "train: pool must contain both genuine and partially_fake utterances");
  bool val_genuine = false, val_fake = false;
  for (const auto& r : validation) (r.cls == UtteranceClass::genuine ? val_genuine : val_fake) = true;
  require(val_genuine && val_fake, ErrorKind::config, "train: validation set must contain both classes");
  const int expected_dim = cfg.feature == FeatureKind::fbank240 ? kFbankDim : kExternalDim;
  require(model.feature_dim == expected_dim, ErrorKind::config,
          "train: model feature_dim " + std::to_string(model.feature_dim) + " does not match the feature stream (" +
              std::to_string(expected_dim) + ")");

  Detector<float> det(model);
  std::int64_t first_step = 1;
  std::optional<nn::Adam<float>> adam;
  if (resume) {
    det = Detector<float>(model, resume->params);
    first_step = resume->step + 1;
    if (resume->optimizer)
      adam.emplace(det.params(), *resume->optimizer);
    else
      adam.emplace(det.params());
  } else {
    det.initialize(derive_seed(cfg.seed, "init"));
    adam.emplace(det.params());
  }

  InferenceConfig val_cfg;
  val_cfg.chunk_len = cfg.chunk_len;
  val_cfg.workers = cfg.workers;
  const ChunkGeometry geo = ChunkGeometry::from(fbank);
  const std::int64_t feature_chunk = chunk_frames(cfg.chunk_len, FeatureKind::external, fbank);
  const int workers = resolve_workers(cfg.workers);
  std::vector<FeaturePipeline> pipes(static_cast<std::size_t>(workers), FeaturePipeline(fbank));

  TrainResult result{Detector<float>(model), {}, {}, {}, std::nullopt, 0.5};
  const auto batch = static_cast<std::size_t>(cfg.batch);
  std::vector<TrainingChunk> chunks(batch);
  std::vector<nn::Gradients<float>> grads;
  for (std::size_t b = 0; b < batch; ++b) grads.emplace_back(det.params());
  std::vector<double> losses(batch);
  nn::Gradients<float> total(det.params());

  for (std::int64_t step = first_step; step <= cfg.total_steps(); ++step) {
    Rng rng(derive_seed(cfg.seed, "batch/" + std::to_string(step)));
    for (auto& c : chunks) {
      if (cfg.feature == FeatureKind::fbank240) {
        c = sample_training_chunk(pool, cfg.chunk_len, cfg.p_genuine, rng, geo);
        if (cfg.noise_std > 0)
          for (auto& s : c.audio.samples) s += static_cast<float>(cfg.noise_std * rng.normal());
      } else {
        c = sample_feature_chunk(pool, feature_chunk, cfg.p_genuine, rng, fbank.sample_rate);
      }
    }
    parallel_for(batch, workers, [&](std::size_t b) {
      const auto& c = chunks[b];
      const RowMatrix<float> x =
          cfg.feature == FeatureKind::fbank240 ? pipes[b % pipes.size()].compute(c.audio).values : c.features.values;
      const std::vector<float> y(c.labels.y.begin(), c.labels.y.end());
      grads[b].zero();
      nn::Tape<float> tape;
      auto loss = nn::bce_with_logits(det.logits(tape, x), y);
      losses[b] = loss.value()[0];
      tape.backward(loss, grads[b]);
    });
    // Fixed-order reduction keeps the update independent of the worker count.
    total.zero();
    double loss = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      total.add(grads[b]);
      loss += losses[b];
    }
    total.scale(1.0f / static_cast<float>(batch));
    loss /= static_cast<double>(batch);
    const double lr = nn::noam_lr(step, cfg.warmup, cfg.lr, model.emb_dim);
    adam->step(det.params(), total, lr);

    TrainLogRow row{step, lr, loss, std::nullopt};
    if (step % cfg.validate_every == 0 || step == cfg.total_steps()) {
      const auto rep = evaluate(det, validation, val_cfg, fbank);
      row.val_eer = *rep.metrics.eer;
      train_detail::insert_retained(result.retained, {step, *row.val_eer, det.params()}, cfg.keep_best);
    }
    result.log.push_back(row);
    if (callbacks.on_step) callbacks.on_step(row);
  }

  result.last.params = det.params();
  result.last.optimizer = adam->state();
  result.last.step = std::max<std::int64_t>(first_step - 1, cfg.total_steps());
  result.last.meta["model"] = model;

  if (result.retained.empty()) {
    result.averaged = det;
  } else {
    std::vector<nn::ParameterSet<float>> sets;
    for (const auto& r : result.retained) sets.push_back(r.params);
    result.averaged = Detector<float>(model, nn::average_parameters(sets));
  }
  const auto final_rep = evaluate(result.averaged, validation, val_cfg, fbank);
  result.averaged_val_eer = final_rep.metrics.eer;
  result.threshold = std::clamp(final_rep.metrics.eer_threshold.value_or(0.5), 0.0, 1.0);
  return result;
}

}  // namespace spliceguard
