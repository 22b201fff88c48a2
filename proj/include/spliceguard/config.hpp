#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "spliceguard/corpus.hpp"
#include "spliceguard/features.hpp"
#include "spliceguard/inference.hpp"
#include "spliceguard/model.hpp"
#include "spliceguard/training.hpp"

namespace spliceguard {

/// Toy corpus synthesis and split layout.
struct SynthConfig {
  int num_genuine = 400;
  int num_fake_donors = 100;
  int words_min = 3;
  int words_max = 6;
  double word_dur_min = 0.15;
  double word_dur_max = 0.35;
  double gap_dur_min = 0.08;
  double gap_dur_max = 0.20;
  int reps_per_strategy = 1;
  int val_sources = 50;
  int test_sources = 100;
  int eval_spliced_per_source = 1;  // spliced variants kept per val/test source

  void validate() const {
    require(num_genuine >= 1 && num_fake_donors >= 1, ErrorKind::config, "corpus: pool sizes must be >= 1");
    require(val_sources >= 0 && test_sources >= 0 && val_sources + test_sources < num_genuine, ErrorKind::config,
            "corpus: val_sources + test_sources must leave at least one training source");
    require(reps_per_strategy >= 0, ErrorKind::config, "corpus: reps_per_strategy must be >= 0");
    require(eval_spliced_per_source >= 0, ErrorKind::config, "corpus: eval_spliced_per_source must be >= 0");
  }

  ToyCorpusConfig toy(int count, int sample_rate) const {
    ToyCorpusConfig c;
    c.num_utterances = count;
    c.words_min = words_min;
    c.words_max = words_max;
    c.word_dur_min = word_dur_min;
    c.word_dur_max = word_dur_max;
    c.gap_dur_min = gap_dur_min;
    c.gap_dur_max = gap_dur_max;
    c.sample_rate = sample_rate;
    return c;
  }
};

struct PathsConfig {
  std::string work_dir;  // empty: $SPLICEGUARD_WORKDIR, else ./work
  std::string train_manifest;
  std::string val_manifest;
  std::string test_manifest;
  std::string checkpoint;
};

struct RunConfig {
  std::uint64_t seed = 0;
  PathsConfig paths;
  SynthConfig corpus;
  FbankConfig features;
  FeatureKind feature_kind = FeatureKind::fbank240;
  DetectorConfig model = DetectorConfig::toy();
  TrainConfig train;
  InferenceConfig infer;

  RunConfig() {
    // Desk-scale defaults for the toy experiment.
    train.batch = 16;
    train.epochs = 10;
    train.steps_per_epoch = 200;
    train.lr = 1e-3;
    train.warmup = 150;
    train.validate_every = 200;
    infer.workers = 0;  // all cores; results do not depend on the worker count
  }

  void validate() const {
    corpus.validate();
    features.validate();
    model.validate();
    train.validate();
    infer.validate();
    require(3 * features.n_mels == kFbankDim, ErrorKind::config,
            "features.n_mels must be " + std::to_string(kFbankDim / 3) + " (static + deltas = 240 columns)");
    const int dim = feature_kind == FeatureKind::fbank240 ? kFbankDim : kExternalDim;
    require(model.feature_dim == dim, ErrorKind::config,
            "model.feature_dim " + std::to_string(model.feature_dim) + " does not match feature kind (" +
                std::to_string(dim) + ")");
  }

  std::filesystem::path work_dir() const {
    if (!paths.work_dir.empty()) return paths.work_dir;
    if (const char* env = std::getenv("SPLICEGUARD_WORKDIR"); env && *env) return env;
    return "work";
  }
};

namespace config_detail {

inline void check_keys(const nlohmann::json& j, const std::string& section, std::initializer_list<const char*> keys) {
  require(j.is_object(), ErrorKind::config, "config: '" + section + "' must be an object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, _] : j.items())
    require(allowed.count(k) > 0, ErrorKind::config,
            "config: unknown key '" + (section.empty() ? k : section + "." + k) + "'");
}

template <class T>
void read(const nlohmann::json& j, const char* key, T& dst, const std::string& section) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    fail(ErrorKind::config, "config: '" + section + "." + key + "' has the wrong type");
  }
}

inline std::string kind_name(FeatureKind k) { return k == FeatureKind::fbank240 ? "fbank" : "external"; }

inline FeatureKind kind_from_name(const std::string& s) {
  if (s == "fbank") return FeatureKind::fbank240;
  if (s == "external") return FeatureKind::external;
  fail(ErrorKind::config, "unknown feature kind '" + s + "' (expected fbank or external)");
}

}  // namespace config_detail

inline FeatureKind feature_kind_from_name(const std::string& s) { return config_detail::kind_from_name(s); }
inline std::string feature_kind_name(FeatureKind k) { return config_detail::kind_name(k); }

inline nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["paths"] = {{"work_dir", c.paths.work_dir},
                {"train_manifest", c.paths.train_manifest},
                {"val_manifest", c.paths.val_manifest},
                {"test_manifest", c.paths.test_manifest},
                {"checkpoint", c.paths.checkpoint}};
  const auto& s = c.corpus;
  j["corpus"] = {{"num_genuine", s.num_genuine},
                 {"num_fake_donors", s.num_fake_donors},
                 {"words_min", s.words_min},
                 {"words_max", s.words_max},
                 {"word_dur_min", s.word_dur_min},
                 {"word_dur_max", s.word_dur_max},
                 {"gap_dur_min", s.gap_dur_min},
                 {"gap_dur_max", s.gap_dur_max},
                 {"reps_per_strategy", s.reps_per_strategy},
                 {"val_sources", s.val_sources},
                 {"test_sources", s.test_sources},
                 {"eval_spliced_per_source", s.eval_spliced_per_source}};
  const auto& f = c.features;
  j["features"] = {{"kind", config_detail::kind_name(c.feature_kind)},
                   {"sample_rate", f.sample_rate},
                   {"frame_length", f.frame_length},
                   {"frame_shift", f.frame_shift},
                   {"n_fft", f.n_fft},
                   {"n_mels", f.n_mels},
                   {"preemph", f.preemph},
                   {"window", f.window == WindowType::hamming ? "hamming" : "povey"},
                   {"log_floor", f.log_floor},
                   {"low_freq", f.low_freq},
                   {"high_freq", f.high_freq},
                   {"delta_window", f.delta_window}};
  nlohmann::json model = c.model;
  j["model"] = model;
  const auto& t = c.train;
  j["train"] = {{"chunk_len", t.chunk_len},     {"batch", t.batch},
                {"epochs", t.epochs},           {"steps_per_epoch", t.steps_per_epoch},
                {"lr", t.lr},                   {"warmup", t.warmup},
                {"p_genuine", t.p_genuine},     {"validate_every", t.validate_every},
                {"keep_best", t.keep_best},     {"workers", t.workers},
                {"noise_std", t.noise_std}};
  nlohmann::json infer = c.infer;
  infer["workers"] = c.infer.workers;
  j["infer"] = infer;
  return j;
}

/// Parse a config object over the defaults; unknown keys are errors.
inline RunConfig run_config_from_json(const nlohmann::json& j) {
  using config_detail::read;
  RunConfig c;
  config_detail::check_keys(j, "", {"seed", "paths", "corpus", "features", "model", "train", "infer"});
  read(j, "seed", c.seed, "");
  if (j.contains("paths")) {
    const auto& p = j["paths"];
    config_detail::check_keys(p, "paths", {"work_dir", "train_manifest", "val_manifest", "test_manifest", "checkpoint"});
    read(p, "work_dir", c.paths.work_dir, "paths");
    read(p, "train_manifest", c.paths.train_manifest, "paths");
    read(p, "val_manifest", c.paths.val_manifest, "paths");
    read(p, "test_manifest", c.paths.test_manifest, "paths");
    read(p, "checkpoint", c.paths.checkpoint, "paths");
  }
  if (j.contains("corpus")) {
    const auto& s = j["corpus"];
    config_detail::check_keys(s, "corpus",
                              {"num_genuine", "num_fake_donors", "words_min", "words_max", "word_dur_min",
                               "word_dur_max", "gap_dur_min", "gap_dur_max", "reps_per_strategy", "val_sources",
                               "test_sources", "eval_spliced_per_source"});
    auto& d = c.corpus;
    read(s, "num_genuine", d.num_genuine, "corpus");
    read(s, "num_fake_donors", d.num_fake_donors, "corpus");
    read(s, "words_min", d.words_min, "corpus");
    read(s, "words_max", d.words_max, "corpus");
    read(s, "word_dur_min", d.word_dur_min, "corpus");
    read(s, "word_dur_max", d.word_dur_max, "corpus");
    read(s, "gap_dur_min", d.gap_dur_min, "corpus");
    read(s, "gap_dur_max", d.gap_dur_max, "corpus");
    read(s, "reps_per_strategy", d.reps_per_strategy, "corpus");
    read(s, "val_sources", d.val_sources, "corpus");
    read(s, "test_sources", d.test_sources, "corpus");
    read(s, "eval_spliced_per_source", d.eval_spliced_per_source, "corpus");
  }
  if (j.contains("features")) {
    const auto& f = j["features"];
    config_detail::check_keys(f, "features",
                              {"kind", "sample_rate", "frame_length", "frame_shift", "n_fft", "n_mels", "preemph",
                               "window", "log_floor", "low_freq", "high_freq", "delta_window"});
    auto& d = c.features;
    std::string kind = config_detail::kind_name(c.feature_kind), window = "hamming";
    read(f, "kind", kind, "features");
    c.feature_kind = config_detail::kind_from_name(kind);
    read(f, "sample_rate", d.sample_rate, "features");
    read(f, "frame_length", d.frame_length, "features");
    read(f, "frame_shift", d.frame_shift, "features");
    read(f, "n_fft", d.n_fft, "features");
    read(f, "n_mels", d.n_mels, "features");
    read(f, "preemph", d.preemph, "features");
    read(f, "window", window, "features");
    require(window == "hamming" || window == "povey", ErrorKind::config, "config: features.window must be hamming or povey");
    d.window = window == "hamming" ? WindowType::hamming : WindowType::povey;
    read(f, "log_floor", d.log_floor, "features");
    read(f, "low_freq", d.low_freq, "features");
    read(f, "high_freq", d.high_freq, "features");
    read(f, "delta_window", d.delta_window, "features");
  }
  if (j.contains("model")) {
    nlohmann::json merged = c.model;
    require(j["model"].is_object(), ErrorKind::config, "config: 'model' must be an object");
    for (const auto& [k, v] : j["model"].items()) merged[k] = v;
    try {
      c.model = merged.get<DetectorConfig>();
    } catch (const nlohmann::json::exception&) {
      fail(ErrorKind::config, "config: 'model' has a value of the wrong type");
    }
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    config_detail::check_keys(t, "train",
                              {"chunk_len", "batch", "epochs", "steps_per_epoch", "lr", "warmup", "p_genuine",
                               "validate_every", "keep_best", "workers", "noise_std"});
    auto& d = c.train;
    read(t, "chunk_len", d.chunk_len, "train");
    read(t, "batch", d.batch, "train");
    read(t, "epochs", d.epochs, "train");
    read(t, "steps_per_epoch", d.steps_per_epoch, "train");
    read(t, "lr", d.lr, "train");
    read(t, "warmup", d.warmup, "train");
    read(t, "p_genuine", d.p_genuine, "train");
    read(t, "validate_every", d.validate_every, "train");
    read(t, "keep_best", d.keep_best, "train");
    read(t, "workers", d.workers, "train");
    read(t, "noise_std", d.noise_std, "train");
  }
  if (j.contains("infer")) {
    const auto& i = j["infer"];
    config_detail::check_keys(i, "infer", {"chunk_len", "overlap", "top_n", "threshold", "tolerance_frames", "workers"});
    auto& d = c.infer;
    read(i, "chunk_len", d.chunk_len, "infer");
    read(i, "overlap", d.overlap, "infer");
    read(i, "top_n", d.top_n, "infer");
    read(i, "threshold", d.threshold, "infer");
    read(i, "tolerance_frames", d.tolerance_frames, "infer");
    read(i, "workers", d.workers, "infer");
  }
  c.train.seed = c.seed;
  c.train.feature = c.feature_kind;
  c.validate();
  return c;
}

inline RunConfig parse_run_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::config, std::string("config is not valid JSON: ") + e.what());
  }
  return run_config_from_json(j);
}

inline RunConfig load_run_config(const std::filesystem::path& p) { return parse_run_config(read_text_file(p)); }

}  // namespace spliceguard
