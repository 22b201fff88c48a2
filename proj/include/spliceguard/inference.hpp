#pragma once

#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spliceguard/corpus.hpp"
#include "spliceguard/features.hpp"
#include "spliceguard/model.hpp"
#include "spliceguard/parallel.hpp"
#include "spliceguard/scoring.hpp"

namespace spliceguard {

struct InferenceConfig {
  double chunk_len = 1.28;  // seconds; matches the training chunk length
  double overlap = 0.5;
  int top_n = 4;
  double threshold = 0.5;  // frame threshold for reported boundaries
  int tolerance_frames = 5;
  int workers = 1;

  void validate() const {
    require(chunk_len > 0, ErrorKind::config, "inference: chunk_len must be positive");
    require(overlap >= 0 && overlap < 1, ErrorKind::config, "inference: overlap must lie in [0, 1)");
    require(top_n >= 1, ErrorKind::config, "inference: top_n must be >= 1");
    require(threshold >= 0 && threshold <= 1, ErrorKind::config, "inference: threshold must lie in [0, 1]");
    require(tolerance_frames >= 0, ErrorKind::config, "inference: tolerance_frames must be >= 0");
  }
};

inline void to_json(nlohmann::json& j, const InferenceConfig& c) {
  j = {{"chunk_len", c.chunk_len}, {"overlap", c.overlap},
       {"top_n", c.top_n},         {"threshold", c.threshold},
       {"tolerance_frames", c.tolerance_frames}};
}

/// Frames per chunk for a feature stream: the frame count of `seconds` of
/// audio for Fbank, seconds / shift for imported features.
inline std::int64_t chunk_frames(double seconds, FeatureKind kind, const FbankConfig& fbank) {
  if (kind == FeatureKind::fbank240)
    return std::max<std::int64_t>(1, num_frames(std::llround(seconds * fbank.sample_rate),
                                                fbank.frame_length_samples(), fbank.frame_shift_samples()));
  return std::max<std::int64_t>(1, std::llround(seconds / kExternalFrameShift));
}

/// Chunked-overlap inference on a full feature matrix. Chunks are cut on
/// the frame grid; sequences shorter than one chunk are wrapped around to
/// fill it and only their own frames are kept.
inline std::vector<double> chunked_probabilities(const Detector<float>& det, const FeatureMatrix& fm,
                                                 std::int64_t chunk, double overlap) {
  require(fm.dim() == det.config().feature_dim, ErrorKind::shape,
          "feature dimension " + std::to_string(fm.dim()) + " does not match model (" +
              std::to_string(det.config().feature_dim) + ")");
  const std::int64_t total = fm.frames();
  require(total >= 1, ErrorKind::argument, "inference: empty feature matrix");
  const ChunkPlan plan = plan_chunks(total, chunk, overlap);
  std::vector<std::vector<double>> outs;
  outs.reserve(plan.starts.size());
  RowMatrix<float> piece(chunk, fm.dim());
  for (auto start : plan.starts) {
    for (std::int64_t j = 0; j < chunk; ++j) piece.row(j) = fm.values.row((start + j) % total);
    const auto p = det.probabilities(piece);
    outs.emplace_back(p.begin(), p.end());
  }
  return merge_chunk_probs(outs, plan, total);
}

struct UtteranceResult {
  std::string id;
  UtteranceClass cls = UtteranceClass::genuine;
  double score = 0.0;
  std::vector<std::int64_t> boundaries;       // detected, frame indices
  std::vector<std::int64_t> true_boundaries;  // annotation mapped to frames
  std::vector<double> probs;
};

struct ReportMetrics {
  std::optional<double> eer;
  std::optional<double> eer_threshold;
  double threshold = 0.5;
  int tolerance_frames = 5;
  LocalizationCounts localization;
  std::int64_t num_genuine = 0;
  std::int64_t num_fake = 0;
};

struct ScoreReport {
  nlohmann::json config = nlohmann::json::object();
  std::vector<UtteranceResult> utterances;
  ReportMetrics metrics;
};

/// Map annotation boundaries (samples) onto a frame grid of `frames` rows.
inline std::vector<std::int64_t> boundary_frames(const SpliceAnnotation& ann, double frame_shift, int sample_rate,
                                                 std::int64_t frames) {
  const double shift = shift_in_samples(frame_shift, sample_rate);
  std::vector<std::int64_t> out;
  for (auto b : ann.boundaries) out.push_back(std::clamp<std::int64_t>(frame_of_sample(b, shift), 0, frames - 1));
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

/// Score already-computed frame probabilities: utterance scores, EER over
/// genuine vs. fake, localization over partially fake utterances.
inline ScoreReport score_results(std::vector<UtteranceResult> results, const InferenceConfig& cfg,
                                 nlohmann::json config_echo = nlohmann::json::object()) {
  cfg.validate();
  ScoreReport rep;
  rep.config = std::move(config_echo);
  rep.metrics.threshold = cfg.threshold;
  rep.metrics.tolerance_frames = cfg.tolerance_frames;
  std::vector<double> genuine, fake;
  for (auto& r : results) {
    r.score = utterance_score(r.probs, cfg.top_n);
    r.boundaries = detect_boundaries(r.probs, cfg.threshold);
    (r.cls == UtteranceClass::genuine ? genuine : fake).push_back(r.score);
    if (r.cls == UtteranceClass::partially_fake)
      rep.metrics.localization += localization_metrics(r.boundaries, r.true_boundaries, cfg.tolerance_frames);
  }
  rep.metrics.num_genuine = static_cast<std::int64_t>(genuine.size());
  rep.metrics.num_fake = static_cast<std::int64_t>(fake.size());
  if (!genuine.empty() && !fake.empty()) {
    const auto e = compute_eer(genuine, fake);
    rep.metrics.eer = e.eer;
    rep.metrics.eer_threshold = e.threshold;
  }
  rep.utterances = std::move(results);
  return rep;
}

/// Frame probabilities for one record: imported features if present,
/// otherwise Fbank computed from the audio.
inline UtteranceResult infer_record(const Detector<float>& det, const UtteranceRecord& rec, FeaturePipeline& fbank,
                                    const InferenceConfig& cfg) {
  FeatureMatrix fm = rec.features ? *rec.features : fbank.compute(rec.waveform());
  const auto chunk = chunk_frames(cfg.chunk_len, fm.kind, fbank.config());
  UtteranceResult r;
  r.id = rec.id;
  r.cls = rec.cls;
  r.probs = chunked_probabilities(det, fm, chunk, cfg.overlap);
  r.true_boundaries = boundary_frames(rec.annotation, fm.frame_shift, fbank.config().sample_rate, fm.frames());
  return r;
}

/// Full evaluation of a labeled corpus, parallel across utterances.
inline ScoreReport evaluate(const Detector<float>& det, const std::vector<UtteranceRecord>& records,
                            const InferenceConfig& cfg, const FbankConfig& fbank = {},
                            nlohmann::json config_echo = nlohmann::json::object()) {
  cfg.validate();
  std::vector<UtteranceResult> results(records.size());
  const int workers = resolve_workers(cfg.workers);
  std::vector<FeaturePipeline> pipes(static_cast<std::size_t>(workers), FeaturePipeline(fbank));
  parallel_for(records.size(), workers, [&](std::size_t i) {
    results[i] = infer_record(det, records[i], pipes[i % static_cast<std::size_t>(workers)], cfg);
  });
  return score_results(std::move(results), cfg, std::move(config_echo));
}

// ---------------------------------------------------------------------------
// Report serialization

namespace report_detail {

inline nlohmann::json optional_number(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline std::optional<double> read_optional(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_null()) return std::nullopt;
  return v.get<double>();
}

}  // namespace report_detail

inline nlohmann::ordered_json report_to_json(const ScoreReport& rep) {
  nlohmann::ordered_json j;
  j["config"] = rep.config;
  const auto& m = rep.metrics;
  j["metrics"] = {{"eer", report_detail::optional_number(m.eer)},
                  {"eer_threshold", report_detail::optional_number(m.eer_threshold)},
                  {"threshold", m.threshold},
                  {"tolerance_frames", m.tolerance_frames},
                  {"precision", m.localization.precision()},
                  {"recall", m.localization.recall()},
                  {"f1", m.localization.f1()},
                  {"matched", m.localization.matched},
                  {"predicted", m.localization.predicted},
                  {"truth", m.localization.truth},
                  {"num_genuine", m.num_genuine},
                  {"num_fake", m.num_fake}};
  auto utts = nlohmann::ordered_json::array();
  for (const auto& u : rep.utterances) {
    nlohmann::ordered_json e;
    e["id"] = u.id;
    e["class"] = to_string(u.cls);
    e["score"] = u.score;
    e["boundaries"] = u.boundaries;
    e["true_boundaries"] = u.true_boundaries;
    e["probs"] = u.probs;
    utts.push_back(std::move(e));
  }
  j["utterances"] = std::move(utts);
  return j;
}

inline ScoreReport report_from_json(const nlohmann::json& j) {
  try {
    ScoreReport rep;
    rep.config = j.at("config");
    const auto& m = j.at("metrics");
    rep.metrics.eer = report_detail::read_optional(m, "eer");
    rep.metrics.eer_threshold = report_detail::read_optional(m, "eer_threshold");
    rep.metrics.threshold = m.at("threshold").get<double>();
    rep.metrics.tolerance_frames = m.at("tolerance_frames").get<int>();
    rep.metrics.localization = {m.at("matched").get<std::int64_t>(), m.at("predicted").get<std::int64_t>(),
                                m.at("truth").get<std::int64_t>()};
    rep.metrics.num_genuine = m.at("num_genuine").get<std::int64_t>();
    rep.metrics.num_fake = m.at("num_fake").get<std::int64_t>();
    for (const auto& e : j.at("utterances")) {
      UtteranceResult u;
      u.id = e.at("id").get<std::string>();
      u.cls = class_from_string(e.at("class").get<std::string>());
      u.score = e.at("score").get<double>();
      u.boundaries = e.at("boundaries").get<std::vector<std::int64_t>>();
      u.true_boundaries = e.at("true_boundaries").get<std::vector<std::int64_t>>();
      u.probs = e.at("probs").get<std::vector<double>>();
      rep.utterances.push_back(std::move(u));
    }
    return rep;
  } catch (const nlohmann::json::exception& ex) {
    fail(ErrorKind::format, std::string("score report: ") + ex.what());
  }
}

inline std::string encode_report(const ScoreReport& rep) { return report_to_json(rep).dump(1) + "\n"; }

inline ScoreReport decode_report(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& ex) {
    fail(ErrorKind::format, std::string("score report: ") + ex.what());
  }
  return report_from_json(j);
}

/// DET points as "threshold,far,frr" CSV.
inline std::string det_csv(const ScoreReport& rep) {
  std::vector<double> genuine, fake;
  for (const auto& u : rep.utterances) (u.cls == UtteranceClass::genuine ? genuine : fake).push_back(u.score);
  std::string out = "threshold,far,frr\n";
  if (genuine.empty() || fake.empty()) return out;
  char line[96];
  for (const auto& p : det_curve(genuine, fake)) {
    std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g\n", p.threshold, p.far, p.frr);
    out += line;
  }
  return out;
}

}  // namespace spliceguard
