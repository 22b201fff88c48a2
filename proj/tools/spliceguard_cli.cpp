// spliceguard: synthesize, train, evaluate and run the splice-boundary detector.

#include <openssl/evp.h>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "spliceguard/spliceguard.hpp"

namespace fs = std::filesystem;
using namespace spliceguard;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kInternal = 3 };

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::argument:
    case ErrorKind::config: return kUsage;
    case ErrorKind::format:
    case ErrorKind::unsupported:
    case ErrorKind::io:
    case ErrorKind::shape: return kData;
    case ErrorKind::internal: return kInternal;
  }
  return kInternal;
}

void print_error(const std::string& kind, const std::string& message) {
  nlohmann::ordered_json j;
  j["error"] = {{"kind", kind}, {"message", message}};
  std::cerr << j.dump() << "\n";
}

std::string sha256_hex(const std::vector<unsigned char>& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  require(EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) == 1, ErrorKind::internal,
          "sha256 failed");
  std::string out;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    out += buf;
  }
  return out;
}

// Options shared by every subcommand. Flags override config-file values.
struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  bool force = false;
  std::optional<double> chunk_len;
  std::optional<double> overlap;
  std::optional<double> threshold;
  std::optional<int> top_n;
  std::optional<std::string> feature;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON run config (unknown keys are rejected)");
  app->add_option("--seed", c.seed, "Global seed");
  app->add_option("--workers", c.workers, "Worker threads (0 = all cores)");
  app->add_flag("--force", c.force, "Overwrite known artifacts in a non-empty output directory");
  app->add_option("--chunk-len", c.chunk_len, "Chunk length in seconds for training and inference");
  app->add_option("--overlap", c.overlap, "Chunk overlap fraction in [0, 1)");
  app->add_option("--threshold", c.threshold, "Frame threshold for reported boundaries");
  app->add_option("--top-n", c.top_n, "Frames averaged into the utterance score");
  app->add_option("--feature", c.feature, "Feature stream")->check(CLI::IsMember({"fbank", "external"}));
}

RunConfig resolve_config(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_run_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.workers) cfg.train.workers = cfg.infer.workers = *c.workers;
  if (c.chunk_len) cfg.train.chunk_len = cfg.infer.chunk_len = *c.chunk_len;
  if (c.overlap) cfg.infer.overlap = *c.overlap;
  if (c.threshold) cfg.infer.threshold = *c.threshold;
  if (c.top_n) cfg.infer.top_n = *c.top_n;
  if (c.feature) {
    cfg.feature_kind = feature_kind_from_name(*c.feature);
    cfg.model.feature_dim = cfg.feature_kind == FeatureKind::fbank240 ? kFbankDim : kExternalDim;
  }
  cfg.train.seed = cfg.seed;
  cfg.train.feature = cfg.feature_kind;
  cfg.validate();
  return cfg;
}

bool non_empty_dir(const fs::path& p) { return fs::exists(p) && fs::is_directory(p) && !fs::is_empty(p); }

// Refuse to write into a populated directory unless forced; when forced,
// remove only the artifacts this command owns.
void prepare_out_dir(const fs::path& out, bool force, const std::vector<std::string>& owned) {
  if (fs::exists(out) && !fs::is_directory(out)) fail(ErrorKind::argument, out.string() + " exists and is not a directory");
  if (non_empty_dir(out)) {
    require(force, ErrorKind::argument, "output directory " + out.string() + " is not empty (use --force)");
    for (const auto& name : owned) fs::remove_all(out / name);
  }
  fs::create_directories(out);
}

std::vector<UtteranceRecord> load_labeled(const fs::path& manifest, const RunConfig& cfg) {
  return load_manifest_records(manifest, cfg.features.sample_rate);
}

fs::path default_path(const std::string& configured, const fs::path& fallback) {
  return configured.empty() ? fallback : fs::path(configured);
}

// ---------------------------------------------------------------------------

int cmd_synth(const Common& c, const std::string& out_arg) {
  RunConfig cfg = resolve_config(c);
  const fs::path out = out_arg.empty() ? cfg.work_dir() / "corpus" : fs::path(out_arg);
  std::vector<std::string> owned = experiment_manifest_names();
  owned.push_back("wav");
  owned.push_back("config.json");
  prepare_out_dir(out, c.force, owned);
  ExperimentCorpus ex = build_experiment_corpus(cfg);
  write_experiment_corpus(ex, out);
  write_text_file(out / "config.json", to_json(cfg).dump(1) + "\n");
  std::cout << "wrote " << ex.genuine.size() << " genuine, " << ex.fake.size() << " fake, " << ex.spliced.size()
            << " spliced; splits train=" << ex.train.size() << " val=" << ex.val.size() << " test=" << ex.test.size()
            << " -> " << out.string() << "\n";
  return kOk;
}

int cmd_features(const Common& c, const std::string& manifest, const std::string& out_arg) {
  RunConfig cfg = resolve_config(c);
  const fs::path in(manifest);
  const fs::path out = out_arg.empty() ? in.parent_path() / "features" : fs::path(out_arg);
  prepare_out_dir(out, c.force, {"feats", in.filename().string(), "config.json"});
  auto records = load_labeled(in, cfg);
  fs::create_directories(out / "feats");
  const int workers = resolve_workers(c.workers.value_or(0));
  std::vector<FeaturePipeline> pipes(static_cast<std::size_t>(workers), FeaturePipeline(cfg.features));
  parallel_for(records.size(), workers, [&](std::size_t i) {
    auto& r = records[i];
    require(r.audio != nullptr, ErrorKind::argument, r.id + ": features can only be computed from audio");
    write_features(pipes[i % pipes.size()].compute(*r.audio), out / "feats" / (r.id + ".sgft"));
    r.path = "feats/" + r.id + ".sgft";
  });
  std::vector<ManifestEntry> entries;
  for (const auto& r : records) entries.push_back(manifest_entry(r));
  write_manifest(out / in.filename(), entries);
  write_text_file(out / "config.json", to_json(cfg).dump(1) + "\n");
  std::cout << "wrote " << records.size() << " feature files -> " << out.string() << "\n";
  return kOk;
}

int cmd_train(const Common& c, const std::string& train_arg, const std::string& val_arg, const std::string& out_arg,
              const std::string& resume_arg) {
  RunConfig cfg = resolve_config(c);
  const fs::path corpus = cfg.work_dir() / "corpus";
  const fs::path train_m = train_arg.empty() ? default_path(cfg.paths.train_manifest, corpus / "train.jsonl") : fs::path(train_arg);
  const fs::path val_m = val_arg.empty() ? default_path(cfg.paths.val_manifest, corpus / "val.jsonl") : fs::path(val_arg);
  const fs::path out = out_arg.empty() ? cfg.work_dir() / "train" : fs::path(out_arg);

  std::optional<nn::Checkpoint> resume;
  if (!resume_arg.empty()) {
    resume = nn::load_checkpoint(resume_arg);
    require(resume->optimizer.has_value(), ErrorKind::argument,
            "resume checkpoint " + resume_arg + " has no optimizer state (use last.sgck)");
    cfg.model = resume->meta.at("model").get<DetectorConfig>();
  }
  const auto train_records = load_labeled(train_m, cfg);
  const auto val_records = load_labeled(val_m, cfg);
  for (const auto* set : {&train_records, &val_records})
    for (const auto& r : *set) {
      if (cfg.feature_kind == FeatureKind::fbank240)
        require(r.audio != nullptr, ErrorKind::argument, r.id + ": fbank training needs audio, got a feature file");
      else
        require(r.features && r.features->kind == FeatureKind::external, ErrorKind::argument,
                r.id + ": external-feature training needs 768-d feature files");
    }
  if (!resume) prepare_out_dir(out, c.force, {"final.sgck", "last.sgck", "best", "train_log.csv"});
  fs::create_directories(out);

  TrainCallbacks cb;
  cb.on_step = [](const TrainLogRow& row) {
    if (row.val_eer) std::cout << "step " << row.step << " loss " << row.loss << " val_eer " << *row.val_eer << "\n";
  };
  const TrainingPool pool(train_records);
  const auto res = train(cfg.train, pool, val_records, cfg.model, cfg.features, resume ? &*resume : nullptr, cb);
  write_training_outputs(res, cfg, out);
  std::cout << "averaged " << res.retained.size() << " checkpoints; val_eer "
            << (res.averaged_val_eer ? std::to_string(*res.averaged_val_eer) : "n/a") << " threshold " << res.threshold
            << " -> " << (out / "final.sgck").string() << "\n";
  return kOk;
}

int cmd_eval(const Common& c, const std::string& ckpt_arg, const std::string& manifest_arg, const std::string& out_arg) {
  RunConfig cfg = resolve_config(c);
  const fs::path ckpt = ckpt_arg.empty() ? default_path(cfg.paths.checkpoint, cfg.work_dir() / "train" / "final.sgck") : fs::path(ckpt_arg);
  const fs::path manifest =
      manifest_arg.empty() ? default_path(cfg.paths.test_manifest, cfg.work_dir() / "corpus" / "test.jsonl") : fs::path(manifest_arg);
  const fs::path out = out_arg.empty() ? cfg.work_dir() / "eval" : fs::path(out_arg);

  const auto bytes = read_file_bytes(ckpt);
  const nn::Checkpoint ck = nn::decode_checkpoint(bytes);
  const Detector<float> det = detector_from_checkpoint(ck);
  if (!c.threshold && ck.meta.contains("threshold")) cfg.infer.threshold = ck.meta.at("threshold").get<double>();
  const auto records = load_labeled(manifest, cfg);
  prepare_out_dir(out, c.force, {"report.json", "det.csv"});

  nlohmann::ordered_json echo;
  echo["run_config"] = to_json(cfg);
  echo["checkpoint"] = ckpt.string();
  echo["checkpoint_sha256"] = sha256_hex(bytes);
  echo["manifest"] = manifest.string();
  const ScoreReport rep = evaluate(det, records, cfg.infer, cfg.features, nlohmann::json(echo));
  write_text_file(out / "report.json", encode_report(rep));
  write_text_file(out / "det.csv", det_csv(rep));
  const auto& m = rep.metrics;
  std::cout << "EER " << (m.eer ? std::to_string(*m.eer) : "n/a") << " recall " << m.localization.recall()
            << " precision " << m.localization.precision() << " -> " << (out / "report.json").string() << "\n";
  return kOk;
}

int cmd_infer(const Common& c, const std::string& ckpt_arg, const std::string& wav, const std::string& feature_file,
              const std::string& out_arg) {
  RunConfig cfg = resolve_config(c);
  require(wav.empty() != feature_file.empty(), ErrorKind::argument, "give exactly one of a WAV path or --feature-file");
  const fs::path ckpt = ckpt_arg.empty() ? default_path(cfg.paths.checkpoint, cfg.work_dir() / "train" / "final.sgck") : fs::path(ckpt_arg);
  const nn::Checkpoint ck = nn::load_checkpoint(ckpt);
  const Detector<float> det = detector_from_checkpoint(ck);
  if (!c.threshold && ck.meta.contains("threshold")) cfg.infer.threshold = ck.meta.at("threshold").get<double>();
  cfg.infer.validate();

  UtteranceRecord rec;
  if (!feature_file.empty()) {
    rec.id = fs::path(feature_file).stem().string();
    rec.features = std::make_shared<FeatureMatrix>(read_features(feature_file));
  } else {
    rec.id = fs::path(wav).stem().string();
    rec.audio = std::make_shared<Waveform>(read_wav(wav));
    require(rec.audio->sample_rate == cfg.features.sample_rate, ErrorKind::format,
            wav + ": sample rate " + std::to_string(rec.audio->sample_rate) + " != " +
                std::to_string(cfg.features.sample_rate));
  }
  FeaturePipeline pipe(cfg.features);
  UtteranceResult r = infer_record(det, rec, pipe, cfg.infer);
  const double shift = rec.features ? rec.features->frame_shift : cfg.features.frame_shift;

  nlohmann::ordered_json j;
  j["id"] = rec.id;
  j["feature"] = rec.features ? feature_kind_name(rec.features->kind) : "fbank";
  j["frame_shift"] = shift;
  j["threshold"] = cfg.infer.threshold;
  j["score"] = utterance_score(r.probs, cfg.infer.top_n);
  j["boundaries"] = detect_boundaries(r.probs, cfg.infer.threshold);
  nlohmann::json times = nlohmann::json::array();
  for (auto b : j["boundaries"]) times.push_back(b.get<std::int64_t>() * shift);
  j["boundary_times"] = times;
  j["probs"] = r.probs;
  const std::string text = j.dump() + "\n";
  if (out_arg.empty())
    std::cout << text;
  else
    write_text_file(out_arg, text);
  return kOk;
}

int cmd_report(const std::string& path) {
  const ScoreReport rep = decode_report(read_text_file(path));
  const auto& m = rep.metrics;
  const auto& loc = m.localization;
  std::printf("utterances   %zu (genuine %lld, fake %lld)\n", rep.utterances.size(),
              static_cast<long long>(m.num_genuine), static_cast<long long>(m.num_fake));
  if (m.eer)
    std::printf("EER          %.4f (threshold %.6f)\n", *m.eer, m.eer_threshold.value_or(0.0));
  else
    std::printf("EER          n/a (needs both classes)\n");
  std::printf("boundaries   threshold %.6f, tolerance %d frames\n", m.threshold, m.tolerance_frames);
  std::printf("             matched %lld / truth %lld / predicted %lld\n", static_cast<long long>(loc.matched),
              static_cast<long long>(loc.truth), static_cast<long long>(loc.predicted));
  std::printf("             precision %.4f recall %.4f F1 %.4f\n", loc.precision(), loc.recall(), loc.f1());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Partially-spliced audio synthesis and splice-boundary detection"};
  app.require_subcommand(1);
  Common common;

  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Synthesize the toy corpus and its train/val/test manifests");
  add_common(synth, common);
  synth->add_option("--out", synth_out, "Output directory (default $SPLICEGUARD_WORKDIR/corpus)");

  std::string feat_manifest, feat_out;
  auto* features = app.add_subcommand("features", "Export Fbank feature files for a manifest");
  add_common(features, common);
  features->add_option("--manifest", feat_manifest, "Input manifest")->required();
  features->add_option("--out", feat_out, "Output directory (default <manifest dir>/features)");

  std::string train_m, val_m, train_out, resume;
  auto* trainc = app.add_subcommand("train", "Train the detector and average the best checkpoints");
  add_common(trainc, common);
  trainc->add_option("--train", train_m, "Training manifest");
  trainc->add_option("--val", val_m, "Validation manifest");
  trainc->add_option("--out", train_out, "Output directory (default $SPLICEGUARD_WORKDIR/train)");
  trainc->add_option("--resume", resume, "Continue from a checkpoint with optimizer state");

  std::string eval_ck, eval_m, eval_out;
  auto* evalc = app.add_subcommand("eval", "Score a labeled manifest and write report.json and det.csv");
  add_common(evalc, common);
  evalc->add_option("--checkpoint", eval_ck, "Model checkpoint");
  evalc->add_option("--manifest", eval_m, "Labeled manifest");
  evalc->add_option("--out", eval_out, "Output directory (default $SPLICEGUARD_WORKDIR/eval)");

  std::string infer_ck, infer_wav, infer_ff, infer_out;
  auto* inferc = app.add_subcommand("infer", "Frame probabilities and boundaries for one file");
  add_common(inferc, common);
  inferc->add_option("--checkpoint", infer_ck, "Model checkpoint");
  inferc->add_option("wav", infer_wav, "Input WAV file");
  inferc->add_option("--feature-file", infer_ff, "Precomputed feature file instead of a WAV");
  inferc->add_option("--out", infer_out, "Write JSON here instead of stdout");

  std::string report_path;
  auto* reportc = app.add_subcommand("report", "Summarize a report.json");
  reportc->add_option("report", report_path, "report.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*synth) return cmd_synth(common, synth_out);
    if (*features) return cmd_features(common, feat_manifest, feat_out);
    if (*trainc) return cmd_train(common, train_m, val_m, train_out, resume);
    if (*evalc) return cmd_eval(common, eval_ck, eval_m, eval_out);
    if (*inferc) return cmd_infer(common, infer_ck, infer_wav, infer_ff, infer_out);
    if (*reportc) return cmd_report(report_path);
  } catch (const Error& e) {
    print_error(to_string(e.kind()), e.what());
    return exit_code_for(e.kind());
  } catch (const nlohmann::json::exception& e) {
    print_error("format", e.what());
    return kData;
  } catch (const fs::filesystem_error& e) {
    print_error("io", e.what());
    return kData;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return kInternal;
  }
  return kInternal;
}
