#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "spliceguard/config.hpp"
#include "spliceguard/corpus.hpp"
#include "spliceguard/manifest.hpp"
#include "spliceguard/model.hpp"
#include "spliceguard/training.hpp"

namespace spliceguard {

/// A synthesized corpus and its source-disjoint train/val/test split.
struct ExperimentCorpus {
  std::vector<UtteranceRecord> genuine;
  std::vector<UtteranceRecord> fake;     // fully fake donors
  std::vector<UtteranceRecord> spliced;  // every partially fake utterance
  std::vector<UtteranceRecord> train;
  std::vector<UtteranceRecord> val;
  std::vector<UtteranceRecord> test;
};

inline int splice_strategy(const UtteranceRecord& r) {
  return r.annotation.provenance.empty() ? 0 : r.annotation.provenance.front().strategy;
}

/// Genuine sources are split in order: the first sources train, then
/// `val_sources`, then `test_sources`. Training keeps every spliced variant
/// of its sources; val/test keep `eval_spliced_per_source` variants, with the
/// preferred strategy rotating over sources so all three are represented.
inline ExperimentCorpus build_experiment_corpus(const RunConfig& cfg) {
  cfg.corpus.validate();
  ExperimentCorpus ex;
  const int rate = cfg.features.sample_rate;
  ex.genuine = generate_toy_corpus(cfg.corpus.toy(cfg.corpus.num_genuine, rate), derive_seed(cfg.seed, "corpus/genuine"));
  ToyCorpusConfig fc = cfg.corpus.toy(cfg.corpus.num_fake_donors, rate);
  fc.family = ToyFamily::filtered_noise;
  fc.cls = UtteranceClass::fully_fake;
  fc.id_prefix = "fake";
  ex.fake = generate_toy_corpus(fc, derive_seed(cfg.seed, "corpus/fake"));
  Rng rng(derive_seed(cfg.seed, "corpus/splice"));
  ex.spliced = build_training_pool(ex.genuine, ex.fake, cfg.corpus.reps_per_strategy, rng);

  const int n_train = cfg.corpus.num_genuine - cfg.corpus.val_sources - cfg.corpus.test_sources;
  std::map<std::string, int> split_of, index_in_split;
  for (int i = 0; i < static_cast<int>(ex.genuine.size()); ++i) {
    const int s = i < n_train ? 0 : (i < n_train + cfg.corpus.val_sources ? 1 : 2);
    split_of[ex.genuine[i].id] = s;
    index_in_split[ex.genuine[i].id] = s == 0 ? i : (s == 1 ? i - n_train : i - n_train - cfg.corpus.val_sources);
    (s == 0 ? ex.train : s == 1 ? ex.val : ex.test).push_back(ex.genuine[i]);
  }

  std::map<std::string, std::vector<const UtteranceRecord*>> by_source;
  for (const auto& r : ex.spliced) {
    if (split_of.at(r.source_id) == 0)
      ex.train.push_back(r);
    else
      by_source[r.source_id].push_back(&r);
  }
  for (const auto& g : ex.genuine) {
    const int s = split_of.at(g.id);
    if (s == 0 || !by_source.count(g.id)) continue;
    auto cands = by_source.at(g.id);
    const int first = index_in_split.at(g.id) % 3 + 1;
    std::stable_sort(cands.begin(), cands.end(), [&](const auto* a, const auto* b) {
      return (splice_strategy(*a) - first + 3) % 3 < (splice_strategy(*b) - first + 3) % 3;
    });
    const auto keep = std::min<std::size_t>(cands.size(), static_cast<std::size_t>(cfg.corpus.eval_spliced_per_source));
    for (std::size_t k = 0; k < keep; ++k) (s == 1 ? ex.val : ex.test).push_back(*cands[k]);
  }
  return ex;
}

inline std::vector<ManifestEntry> manifest_entries(const std::vector<UtteranceRecord>& records) {
  std::vector<ManifestEntry> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(manifest_entry(r));
  return out;
}

/// Point every record at "<subdir>/<id>.wav".
inline void assign_wav_paths(ExperimentCorpus& ex, const std::string& subdir = "wav") {
  for (auto* set : {&ex.genuine, &ex.fake, &ex.spliced, &ex.train, &ex.val, &ex.test})
    for (auto& r : *set) r.path = subdir + "/" + r.id + ".wav";
}

inline const std::vector<std::string>& experiment_manifest_names() {
  static const std::vector<std::string> names = {"genuine.jsonl", "fake.jsonl", "spliced.jsonl",
                                                 "train.jsonl",   "val.jsonl",  "test.jsonl"};
  return names;
}

/// Write audio under out/wav and one manifest per set.
inline void write_experiment_corpus(ExperimentCorpus& ex, const std::filesystem::path& out) {
  assign_wav_paths(ex);
  std::filesystem::create_directories(out / "wav");
  for (const auto* set : {&ex.genuine, &ex.fake, &ex.spliced})
    for (const auto& r : *set) write_wav(r.waveform(), out / r.path);
  const std::vector<const std::vector<UtteranceRecord>*> sets = {&ex.genuine, &ex.fake, &ex.spliced,
                                                                 &ex.train,   &ex.val,  &ex.test};
  for (std::size_t i = 0; i < sets.size(); ++i)
    write_manifest(out / experiment_manifest_names()[i], manifest_entries(*sets[i]));
}

/// The averaged model as a checkpoint carrying its decision threshold,
/// validation EER and the full run config.
inline nn::Checkpoint final_checkpoint(const TrainResult& res, const RunConfig& cfg) {
  nlohmann::json meta;
  meta["threshold"] = res.threshold;
  meta["val_eer"] = res.averaged_val_eer ? nlohmann::json(*res.averaged_val_eer) : nlohmann::json(nullptr);
  meta["averaged_steps"] = nlohmann::json::array();
  for (const auto& r : res.retained) meta["averaged_steps"].push_back(r.step);
  meta["run_config"] = to_json(cfg);
  return make_checkpoint(res.averaged, res.last.step, meta);
}

inline nn::Checkpoint last_checkpoint(const TrainResult& res, const RunConfig& cfg) {
  nn::Checkpoint ck = res.last;
  ck.meta["run_config"] = to_json(cfg);
  return ck;
}

/// final.sgck, last.sgck (with optimizer state), best/step<N>.sgck and train_log.csv.
inline void write_training_outputs(const TrainResult& res, const RunConfig& cfg, const std::filesystem::path& out) {
  std::filesystem::create_directories(out / "best");
  nn::save_checkpoint(final_checkpoint(res, cfg), out / "final.sgck");
  nn::save_checkpoint(last_checkpoint(res, cfg), out / "last.sgck");
  for (const auto& r : res.retained) {
    nn::Checkpoint ck;
    ck.params = r.params;
    ck.step = r.step;
    ck.meta["model"] = res.averaged.config();
    ck.meta["val_eer"] = r.val_eer;
    nn::save_checkpoint(ck, out / "best" / ("step" + std::to_string(r.step) + ".sgck"));
  }
  write_text_file(out / "train_log.csv", training_log_csv(res.log));
}

}  // namespace spliceguard
