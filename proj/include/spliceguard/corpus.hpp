#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "spliceguard/audio.hpp"
#include "spliceguard/error.hpp"
#include "spliceguard/features.hpp"
#include "spliceguard/rng.hpp"

namespace spliceguard {

enum class UtteranceClass { genuine, fully_fake, partially_fake };

inline const char* to_string(UtteranceClass c) {
  switch (c) {
    case UtteranceClass::genuine: return "genuine";
    case UtteranceClass::fully_fake: return "fully_fake";
    case UtteranceClass::partially_fake: return "partially_fake";
  }
  return "genuine";
}

inline UtteranceClass class_from_string(const std::string& s) {
  if (s == "genuine") return UtteranceClass::genuine;
  if (s == "fully_fake") return UtteranceClass::fully_fake;
  if (s == "partially_fake") return UtteranceClass::partially_fake;
  fail(ErrorKind::format, "unknown utterance class '" + s + "'");
}

/// Half-open sample range [start, end) of one word.
struct WordSegment {
  std::int64_t start = 0;
  std::int64_t end = 0;

  std::int64_t length() const { return end - start; }
  bool operator==(const WordSegment&) const = default;
};

/// Where one spliced piece came from: strategy 1 (genuine donor), 2 (fake
/// donor) or 3 (in-place repeat), the donor and its segment, the target
/// segment it replaced or repeated, and where it landed in the output.
struct SpliceSource {
  int strategy = 0;
  std::string donor_id;
  WordSegment donor_segment;
  WordSegment target_segment;
  WordSegment output_segment;
};

struct SpliceAnnotation {
  std::vector<std::int64_t> boundaries;  // sample indices, strictly increasing
  std::vector<SpliceSource> provenance;
};

struct UtteranceRecord {
  std::string id;
  std::string path;
  std::shared_ptr<const Waveform> audio;
  std::shared_ptr<const FeatureMatrix> features;  // imported embeddings, if any
  std::vector<WordSegment> segments;
  UtteranceClass cls = UtteranceClass::genuine;
  SpliceAnnotation annotation;
  std::string source_id;  // genuine utterance this one was derived from

  const Waveform& waveform() const {
    require(audio != nullptr, ErrorKind::argument, "utterance " + id + " has no audio loaded");
    return *audio;
  }
  std::int64_t num_samples() const { return static_cast<std::int64_t>(waveform().size()); }

  /// Structural checks on segments and boundaries against `length` samples.
  void validate(std::int64_t length) const {
    std::int64_t prev_end = 0;
    for (const auto& s : segments) {
      require(s.start >= 0 && s.start < s.end && s.end <= length, ErrorKind::format,
              id + ": segment [" + std::to_string(s.start) + "," + std::to_string(s.end) + ") out of range");
      require(s.start >= prev_end, ErrorKind::format, id + ": segments overlap or are unsorted");
      prev_end = s.end;
    }
    std::int64_t prev = 0;
    for (auto b : annotation.boundaries) {
      require(b > prev && b < length, ErrorKind::format,
              id + ": boundary " + std::to_string(b) + " not strictly increasing within (0, length)");
      prev = b;
    }
    if (cls != UtteranceClass::partially_fake)
      require(annotation.boundaries.empty(), ErrorKind::format, id + ": only partially_fake utterances carry boundaries");
  }
};

struct SpliceResult {
  Waveform audio;
  SpliceAnnotation annotation;
  std::vector<WordSegment> segments;
};

// ---------------------------------------------------------------------------
// Toy corpus

enum class ToyFamily { tone, filtered_noise };

struct ToyCorpusConfig {
  int num_utterances = 100;
  int words_min = 3;
  int words_max = 6;
  double word_dur_min = 0.15;  // seconds
  double word_dur_max = 0.35;
  double gap_dur_min = 0.08;
  double gap_dur_max = 0.20;
  int sample_rate = 16000;
  ToyFamily family = ToyFamily::tone;
  UtteranceClass cls = UtteranceClass::genuine;
  std::string id_prefix = "utt";

  void validate() const {
    require(num_utterances >= 1, ErrorKind::config, "toy corpus: num_utterances must be >= 1");
    require(words_min >= 1 && words_min <= words_max, ErrorKind::config, "toy corpus: bad words range");
    require(word_dur_min > 0 && word_dur_min <= word_dur_max, ErrorKind::config, "toy corpus: bad word_dur range");
    require(gap_dur_min > 0 && gap_dur_min <= gap_dur_max, ErrorKind::config, "toy corpus: bad gap_dur range");
    require(sample_rate > 0, ErrorKind::config, "toy corpus: sample_rate must be positive");
    require(cls != UtteranceClass::partially_fake, ErrorKind::config, "toy corpus: cannot synthesize partially_fake");
  }
};

namespace toy_detail {

inline std::int64_t seconds_to_samples(double s, int rate) { return std::max<std::int64_t>(1, std::llround(s * rate)); }

/// Raised-cosine rise from 0 to 1 across `len` samples.
inline double rise(std::int64_t i, std::int64_t len) {
  if (len <= 0 || i >= len) return 1.0;
  return 0.5 - 0.5 * std::cos(M_PI * static_cast<double>(i) / static_cast<double>(len));
}

struct Layout {
  std::int64_t total = 0;
  std::vector<WordSegment> words;
};

inline Layout draw_layout(const ToyCorpusConfig& cfg, Rng& rng) {
  Layout lay;
  const int words = static_cast<int>(rng.uniform_int(cfg.words_min, cfg.words_max));
  std::int64_t at = seconds_to_samples(rng.uniform(cfg.gap_dur_min, cfg.gap_dur_max), cfg.sample_rate);
  for (int w = 0; w < words; ++w) {
    const std::int64_t len = seconds_to_samples(rng.uniform(cfg.word_dur_min, cfg.word_dur_max), cfg.sample_rate);
    lay.words.push_back({at, at + len});
    at += len + seconds_to_samples(rng.uniform(cfg.gap_dur_min, cfg.gap_dur_max), cfg.sample_rate);
  }
  lay.total = at;
  return lay;
}

/// Amplitude envelope: a floor level in gaps, per-word peaks with smooth
/// 15 ms ramps that return to the floor exactly at word edges, and a 20 ms
/// fade at the utterance ends.
inline std::vector<double> envelope(const Layout& lay, double floor_level, const std::vector<double>& peaks, int rate) {
  std::vector<double> env(static_cast<std::size_t>(lay.total), floor_level);
  const std::int64_t ramp = seconds_to_samples(0.015, rate);
  for (std::size_t w = 0; w < lay.words.size(); ++w) {
    const auto& seg = lay.words[w];
    const std::int64_t r = std::min(ramp, seg.length() / 2);
    for (std::int64_t i = seg.start; i < seg.end; ++i) {
      const double shape = std::min(rise(i - seg.start, r), rise(seg.end - 1 - i, r));
      env[static_cast<std::size_t>(i)] = floor_level + (peaks[w] - floor_level) * shape;
    }
  }
  const std::int64_t fade = std::min(seconds_to_samples(0.020, rate), lay.total / 2);
  for (std::int64_t i = 0; i < fade; ++i) {
    const double g = rise(i, fade);
    env[static_cast<std::size_t>(i)] *= g;
    env[static_cast<std::size_t>(lay.total - 1 - i)] *= g;
  }
  return env;
}

inline std::vector<float> tone_signal(const ToyCorpusConfig& cfg, const Layout& lay, Rng& rng) {
  const double f0 = rng.uniform(100.0, 240.0);
  const int harmonics = static_cast<int>(rng.uniform_int(4, 8));
  std::vector<double> amp(harmonics);
  double norm = 0.0;
  for (int k = 0; k < harmonics; ++k) norm += (amp[k] = rng.uniform(0.3, 1.0) / (k + 1));
  for (auto& a : amp) a /= norm;
  const double floor_level = rng.uniform(0.04, 0.10);
  const double noise = rng.uniform(0.002, 0.005);
  std::vector<double> peaks, pitch;
  for (std::size_t w = 0; w < lay.words.size(); ++w) {
    peaks.push_back(rng.uniform(0.25, 0.6));
    pitch.push_back(rng.uniform(0.92, 1.08));
  }
  const auto env = envelope(lay, floor_level, peaks, cfg.sample_rate);

  // One phase-continuous oscillator for the whole utterance; each word
  // retunes it, gaps keep the last word's pitch.
  std::vector<float> out(static_cast<std::size_t>(lay.total));
  double phase = rng.uniform(0.0, 2.0 * M_PI);
  double factor = pitch.empty() ? 1.0 : pitch[0];
  std::size_t next_word = 0;
  for (std::int64_t i = 0; i < lay.total; ++i) {
    if (next_word < lay.words.size() && i == lay.words[next_word].start) factor = pitch[next_word++];
    double v = 0.0;
    for (int k = 0; k < harmonics; ++k) v += amp[k] * std::sin((k + 1) * phase);
    out[static_cast<std::size_t>(i)] = static_cast<float>(env[static_cast<std::size_t>(i)] * v + noise * rng.normal());
    phase += 2.0 * M_PI * f0 * factor / cfg.sample_rate;
    if (phase > 2.0 * M_PI * 64) phase = std::fmod(phase, 2.0 * M_PI);
  }
  return out;
}

inline std::vector<float> filtered_noise_signal(const ToyCorpusConfig& cfg, const Layout& lay, Rng& rng) {
  // Two-pole resonator driven by white noise, normalized to unit RMS.
  const double center = rng.uniform(300.0, 3000.0);
  const double radius = rng.uniform(0.90, 0.98);
  const double theta = 2.0 * M_PI * center / cfg.sample_rate;
  const double a1 = 2.0 * radius * std::cos(theta), a2 = -radius * radius;
  std::vector<double> raw(static_cast<std::size_t>(lay.total));
  double y1 = 0.0, y2 = 0.0, energy = 0.0;
  for (auto& v : raw) {
    const double y = rng.normal() + a1 * y1 + a2 * y2;
    y2 = y1;
    y1 = y;
    v = y;
    energy += y * y;
  }
  const double rms = std::sqrt(energy / std::max<std::size_t>(1, raw.size()));
  const double floor_level = rng.uniform(0.04, 0.10);
  const double noise = rng.uniform(0.002, 0.005);
  std::vector<double> peaks;
  for (std::size_t w = 0; w < lay.words.size(); ++w) peaks.push_back(rng.uniform(0.15, 0.35));
  const auto env = envelope(lay, floor_level, peaks, cfg.sample_rate);
  std::vector<float> out(raw.size());
  // Gaussian peaks can exceed full scale; a soft limiter keeps them inside.
  for (std::size_t i = 0; i < raw.size(); ++i)
    out[i] = static_cast<float>(0.9 * std::tanh((env[i] * raw[i] / rms + noise * rng.normal()) / 0.9));
  return out;
}

}  // namespace toy_detail

/// Speech-like toy utterances with exactly known word segments.
///
/// Each utterance has its own timbre (pitch and harmonic mix, or resonance
/// band for the noise family) and a continuous low-level carrier between
/// words, so a hard cut to material from another utterance leaves a local
/// discontinuity. Per-utterance seeds are derived from (seed, id).
inline std::vector<UtteranceRecord> generate_toy_corpus(const ToyCorpusConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::vector<UtteranceRecord> out;
  out.reserve(static_cast<std::size_t>(cfg.num_utterances));
  for (int u = 0; u < cfg.num_utterances; ++u) {
    std::ostringstream id;
    id << cfg.id_prefix << std::setw(5) << std::setfill('0') << u;
    Rng rng(derive_seed(seed, id.str()));
    const auto layout = toy_detail::draw_layout(cfg, rng);
    auto wave = std::make_shared<Waveform>();
    wave->sample_rate = cfg.sample_rate;
    wave->samples = cfg.family == ToyFamily::tone ? toy_detail::tone_signal(cfg, layout, rng)
                                                  : toy_detail::filtered_noise_signal(cfg, layout, rng);
    UtteranceRecord rec;
    rec.id = id.str();
    rec.audio = std::move(wave);
    rec.segments = layout.words;
    rec.cls = cfg.cls;
    rec.source_id = rec.id;
    out.push_back(std::move(rec));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Splicing

/// One planned replacement: target segment index <- donor segment.
struct Replacement {
  std::size_t target_index = 0;
  const UtteranceRecord* donor = nullptr;
  std::size_t donor_index = 0;
};

namespace splice_detail {

inline void append(std::vector<float>& out, const Waveform& w, std::int64_t begin, std::int64_t end) {
  out.insert(out.end(), w.samples.begin() + begin, w.samples.begin() + end);
}

inline void finish(SpliceResult& r) {
  auto& b = r.annotation.boundaries;
  std::sort(b.begin(), b.end());
  b.erase(std::unique(b.begin(), b.end()), b.end());
  const auto len = static_cast<std::int64_t>(r.audio.samples.size());
  std::erase_if(b, [len](std::int64_t s) { return s <= 0 || s >= len; });
}

}  // namespace splice_detail

/// Hard-cut replacement of the given target segments by donor segments.
inline SpliceResult apply_replacements(const UtteranceRecord& target, std::vector<Replacement> plan) {
  const Waveform& src = target.waveform();
  std::sort(plan.begin(), plan.end(), [](const auto& a, const auto& b) { return a.target_index < b.target_index; });
  for (std::size_t i = 0; i < plan.size(); ++i) {
    require(plan[i].target_index < target.segments.size(), ErrorKind::argument, "replacement index out of range");
    require(i == 0 || plan[i].target_index != plan[i - 1].target_index, ErrorKind::argument,
            "a segment can be replaced only once");
    require(plan[i].donor != nullptr && plan[i].donor_index < plan[i].donor->segments.size(), ErrorKind::argument,
            "replacement donor segment out of range");
    require(plan[i].donor->waveform().sample_rate == src.sample_rate, ErrorKind::argument,
            "donor sample rate differs from target");
  }
  SpliceResult r;
  r.audio.sample_rate = src.sample_rate;
  std::int64_t cursor = 0;
  std::size_t next = 0;
  for (std::size_t i = 0; i < target.segments.size(); ++i) {
    const WordSegment& seg = target.segments[i];
    splice_detail::append(r.audio.samples, src, cursor, seg.start);
    const auto out_start = static_cast<std::int64_t>(r.audio.samples.size());
    if (next < plan.size() && plan[next].target_index == i) {
      const auto& rep = plan[next++];
      const WordSegment donor_seg = rep.donor->segments[rep.donor_index];
      splice_detail::append(r.audio.samples, rep.donor->waveform(), donor_seg.start, donor_seg.end);
      const WordSegment placed{out_start, out_start + donor_seg.length()};
      r.segments.push_back(placed);
      r.annotation.boundaries.push_back(placed.start);
      r.annotation.boundaries.push_back(placed.end);
      const int strategy = rep.donor->cls == UtteranceClass::genuine ? 1 : 2;
      r.annotation.provenance.push_back({strategy, rep.donor->id, donor_seg, seg, placed});
    } else {
      splice_detail::append(r.audio.samples, src, seg.start, seg.end);
      r.segments.push_back({out_start, out_start + seg.length()});
    }
    cursor = seg.end;
  }
  splice_detail::append(r.audio.samples, src, cursor, static_cast<std::int64_t>(src.size()));
  splice_detail::finish(r);
  return r;
}

/// Replace `n` distinct target words, chosen uniformly, each with a
/// uniformly chosen word of a uniformly chosen donor (donors with the
/// target's id are skipped). Genuine donors make strategy 1, fake donors
/// strategy 2.
inline SpliceResult splice_replace(const UtteranceRecord& target, std::span<const UtteranceRecord> donors, int n,
                                   Rng& rng) {
  require(target.cls == UtteranceClass::genuine, ErrorKind::argument, "splice target must be genuine");
  require(n >= 1 && static_cast<std::size_t>(n) <= target.segments.size(), ErrorKind::argument,
          "splice_replace: n=" + std::to_string(n) + " but target has " + std::to_string(target.segments.size()) +
              " segments");
  std::vector<const UtteranceRecord*> usable;
  for (const auto& d : donors)
    if (d.id != target.id && !d.segments.empty()) usable.push_back(&d);
  require(!usable.empty(), ErrorKind::argument, "splice_replace: empty donor pool");

  std::vector<Replacement> plan;
  for (std::size_t idx : rng.sample_without_replacement(target.segments.size(), static_cast<std::size_t>(n))) {
    const auto* donor = usable[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(usable.size()) - 1))];
    const auto seg = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(donor->segments.size()) - 1));
    plan.push_back({idx, donor, seg});
  }
  return apply_replacements(target, std::move(plan));
}

/// Duplicate the listed target segments in place (copy right after original).
inline SpliceResult apply_repeats(const UtteranceRecord& target, std::vector<std::size_t> indices) {
  const Waveform& src = target.waveform();
  std::sort(indices.begin(), indices.end());
  require(std::adjacent_find(indices.begin(), indices.end()) == indices.end(), ErrorKind::argument,
          "a segment can be repeated only once");
  SpliceResult r;
  r.audio.sample_rate = src.sample_rate;
  std::int64_t cursor = 0;
  std::size_t next = 0;
  for (std::size_t i = 0; i < target.segments.size(); ++i) {
    const WordSegment& seg = target.segments[i];
    splice_detail::append(r.audio.samples, src, cursor, seg.end);
    const auto copy_start = static_cast<std::int64_t>(r.audio.samples.size());
    r.segments.push_back({copy_start - seg.length(), copy_start});
    if (next < indices.size() && indices[next] == i) {
      ++next;
      splice_detail::append(r.audio.samples, src, seg.start, seg.end);
      const WordSegment placed{copy_start, copy_start + seg.length()};
      r.segments.push_back(placed);
      r.annotation.boundaries.push_back(placed.start);
      r.annotation.boundaries.push_back(placed.end);
      r.annotation.provenance.push_back({3, target.id, seg, seg, placed});
    }
    cursor = seg.end;
  }
  require(next == indices.size(), ErrorKind::argument, "repeat index out of range");
  splice_detail::append(r.audio.samples, src, cursor, static_cast<std::int64_t>(src.size()));
  splice_detail::finish(r);
  return r;
}

/// Repeat `n` distinct words, 1 <= n <= floor(N/3) for N target words.
inline SpliceResult splice_repeat(const UtteranceRecord& target, int n, Rng& rng) {
  require(target.cls == UtteranceClass::genuine, ErrorKind::argument, "splice target must be genuine");
  const auto words = static_cast<int>(target.segments.size());
  require(words >= 3, ErrorKind::argument, "splice_repeat: needs at least 3 word segments, have " + std::to_string(words));
  require(n >= 1 && n <= words / 3, ErrorKind::argument,
          "splice_repeat: n=" + std::to_string(n) + " outside [1, " + std::to_string(words / 3) + "]");
  return apply_repeats(target, rng.sample_without_replacement(target.segments.size(), static_cast<std::size_t>(n)));
}

/// Apply each of the three strategies `reps` times to every genuine
/// utterance. Inapplicable cases (fewer than 3 words for repeats, no other
/// genuine donor) are skipped. Output ids are "<source>_s<strategy>r<rep>".
inline std::vector<UtteranceRecord> build_training_pool(std::span<const UtteranceRecord> genuine,
                                                        std::span<const UtteranceRecord> fake, int reps, Rng& rng) {
  require(reps >= 0, ErrorKind::argument, "reps_per_strategy must be >= 0");
  require(!genuine.empty() && !fake.empty(), ErrorKind::argument, "build_training_pool: pools must be non-empty");
  const std::uint64_t master = rng.next_u64();
  std::vector<UtteranceRecord> out;
  for (const auto& g : genuine) {
    require(g.cls == UtteranceClass::genuine, ErrorKind::argument, g.id + " in genuine pool is not genuine");
    for (int strategy = 1; strategy <= 3; ++strategy) {
      for (int rep = 0; rep < reps; ++rep) {
        const std::string id = g.id + "_s" + std::to_string(strategy) + "r" + std::to_string(rep);
        Rng local(derive_seed(master, id));
        const auto words = static_cast<std::int64_t>(g.segments.size());
        if (words == 0) continue;
        SpliceResult res;
        if (strategy == 3) {
          if (words < 3) continue;
          res = splice_repeat(g, static_cast<int>(local.uniform_int(1, words / 3)), local);
        } else {
          auto donors = strategy == 1 ? genuine : fake;
          const bool has_donor = std::any_of(donors.begin(), donors.end(),
                                             [&](const auto& d) { return d.id != g.id && !d.segments.empty(); });
          if (!has_donor) continue;
          res = splice_replace(g, donors, static_cast<int>(local.uniform_int(1, std::min<std::int64_t>(3, words))),
                               local);
        }
        UtteranceRecord rec;
        rec.id = id;
        rec.audio = std::make_shared<Waveform>(std::move(res.audio));
        rec.segments = std::move(res.segments);
        rec.cls = UtteranceClass::partially_fake;
        rec.annotation = std::move(res.annotation);
        rec.source_id = g.id;
        out.push_back(std::move(rec));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Frame labels

struct FrameLabels {
  std::vector<std::uint8_t> y;
  double frame_shift = 0.010;

  std::size_t ones() const { return static_cast<std::size_t>(std::count(y.begin(), y.end(), std::uint8_t{1})); }
};

/// Frames on each side of a boundary frame that are also labeled 1.
inline constexpr int kSmearRadius = 2;

/// Label frame `center` and its kSmearRadius neighbours on each side,
/// clipped to [0, T). Centers outside the range only mark what falls inside.
inline void mark_boundary(std::vector<std::uint8_t>& y, std::int64_t center) {
  const auto len = static_cast<std::int64_t>(y.size());
  for (std::int64_t f = center - kSmearRadius; f <= center + kSmearRadius; ++f)
    if (f >= 0 && f < len) y[static_cast<std::size_t>(f)] = 1;
}

/// Frame index containing sample `s` for a hop of `shift_samples`.
inline std::int64_t frame_of_sample(std::int64_t s, double shift_samples) {
  return static_cast<std::int64_t>(std::floor(static_cast<double>(s) / shift_samples));
}

inline double shift_in_samples(double frame_shift, int sample_rate) {
  const double exact = frame_shift * sample_rate;
  const double rounded = std::round(exact);
  return std::abs(exact - rounded) < 1e-6 ? rounded : exact;
}

inline FrameLabels labels_from_annotation(const SpliceAnnotation& ann, double frame_shift, int sample_rate,
                                          std::int64_t frames) {
  require(frames >= 1, ErrorKind::argument, "labels: frame count must be >= 1");
  require(frame_shift > 0 && sample_rate > 0, ErrorKind::argument, "labels: frame_shift and sample_rate must be positive");
  const double shift = shift_in_samples(frame_shift, sample_rate);
  FrameLabels out;
  out.frame_shift = frame_shift;
  out.y.assign(static_cast<std::size_t>(frames), 0);
  for (auto s : ann.boundaries) {
    require(s >= 0 && static_cast<double>(s) < static_cast<double>(frames) * shift, ErrorKind::argument,
            "labels: boundary at sample " + std::to_string(s) + " lies outside the " + std::to_string(frames) +
                "-frame grid");
    mark_boundary(out.y, frame_of_sample(s, shift));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training chunks

/// Mixed genuine / partially-fake pool with per-class indices.
class TrainingPool {
 public:
  explicit TrainingPool(std::vector<UtteranceRecord> records) : records_(std::move(records)) {
    for (std::size_t i = 0; i < records_.size(); ++i) {
      if (records_[i].cls == UtteranceClass::genuine) genuine_.push_back(i);
      if (records_[i].cls == UtteranceClass::partially_fake) spliced_.push_back(i);
    }
  }

  const std::vector<UtteranceRecord>& records() const { return records_; }
  const std::vector<std::size_t>& genuine() const { return genuine_; }
  const std::vector<std::size_t>& spliced() const { return spliced_; }
  bool empty() const { return genuine_.empty() && spliced_.empty(); }

 private:
  std::vector<UtteranceRecord> records_;
  std::vector<std::size_t> genuine_;
  std::vector<std::size_t> spliced_;
};

struct TrainingChunk {
  Waveform audio;
  FeatureMatrix features;  // filled by the feature-domain sampler only
  FrameLabels labels;
  bool genuine = true;
  std::string source_id;
  std::int64_t offset = 0;  // window start in the source (samples or frames)
};

struct ChunkGeometry {
  int sample_rate = 16000;
  int frame_length = 400;  // samples
  int frame_shift = 160;   // samples

  static ChunkGeometry from(const FbankConfig& cfg) {
    return {cfg.sample_rate, cfg.frame_length_samples(), cfg.frame_shift_samples()};
  }
};

namespace chunk_detail {

inline const UtteranceRecord& draw(const TrainingPool& pool, double p_genuine, Rng& rng, bool& genuine) {
  require(p_genuine >= 0.0 && p_genuine <= 1.0, ErrorKind::argument, "p_genuine must lie in [0, 1]");
  require(!pool.empty(), ErrorKind::argument, "training pool is empty");
  genuine = rng.bernoulli(p_genuine);
  const auto& idx = genuine ? pool.genuine() : pool.spliced();
  require(!idx.empty(), ErrorKind::argument,
          std::string("training pool has no ") + (genuine ? "genuine" : "partially_fake") + " utterances");
  return pool.records()[idx[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(idx.size()) - 1))]];
}

}  // namespace chunk_detail

/// Draw one fixed-length training window. Genuine with probability
/// `p_genuine` (all-zero labels), else partially fake. Short utterances are
/// wrapped around; the wrap seam is not a boundary, but boundaries inside
/// each repetition are.
inline TrainingChunk sample_training_chunk(const TrainingPool& pool, double chunk_seconds, double p_genuine, Rng& rng,
                                           const ChunkGeometry& geo = {}) {
  require(chunk_seconds > 0.0, ErrorKind::argument, "chunk length must be positive");
  bool genuine = true;
  const UtteranceRecord& rec = chunk_detail::draw(pool, p_genuine, rng, genuine);
  const Waveform& src = rec.waveform();
  require(src.sample_rate == geo.sample_rate, ErrorKind::argument, rec.id + ": sample rate mismatch");
  const std::int64_t window = std::llround(chunk_seconds * geo.sample_rate);
  const auto n = static_cast<std::int64_t>(src.size());
  require(n > 0, ErrorKind::argument, rec.id + ": empty waveform");

  TrainingChunk c;
  c.genuine = genuine;
  c.source_id = rec.id;
  c.audio.sample_rate = src.sample_rate;
  c.audio.samples.resize(static_cast<std::size_t>(window));
  const std::int64_t start = n >= window ? rng.uniform_int(0, n - window) : 0;
  c.offset = start;
  for (std::int64_t i = 0; i < window; ++i)
    c.audio.samples[static_cast<std::size_t>(i)] = src.samples[static_cast<std::size_t>((start + i) % n)];

  const std::int64_t frames = num_frames(window, geo.frame_length, geo.frame_shift);
  require(frames >= 1, ErrorKind::argument, "chunk shorter than one analysis frame");
  c.labels.frame_shift = static_cast<double>(geo.frame_shift) / geo.sample_rate;
  c.labels.y.assign(static_cast<std::size_t>(frames), 0);
  if (!genuine) {
    const std::int64_t copies = n >= window ? 1 : (window + n - 1) / n;
    for (std::int64_t k = 0; k < copies; ++k)
      for (auto b : rec.annotation.boundaries) {
        const std::int64_t local = b + k * n - start;
        if (local < 0 || local >= window) continue;
        mark_boundary(c.labels.y, frame_of_sample(local, geo.frame_shift));
      }
  }
  return c;
}

/// Feature-domain variant for utterances carrying imported features: the
/// window is `chunk_frames` rows, boundaries map through the features'
/// frame shift at `sample_rate`.
inline TrainingChunk sample_feature_chunk(const TrainingPool& pool, std::int64_t chunk_frames, double p_genuine,
                                          Rng& rng, int sample_rate) {
  require(chunk_frames >= 1, ErrorKind::argument, "chunk must span at least one frame");
  bool genuine = true;
  const UtteranceRecord& rec = chunk_detail::draw(pool, p_genuine, rng, genuine);
  require(rec.features != nullptr, ErrorKind::argument, rec.id + " has no imported features");
  const FeatureMatrix& fm = *rec.features;
  const std::int64_t n = fm.frames();
  require(n > 0, ErrorKind::argument, rec.id + ": empty feature matrix");
  const double shift = shift_in_samples(fm.frame_shift, sample_rate);

  TrainingChunk c;
  c.genuine = genuine;
  c.source_id = rec.id;
  c.features.kind = fm.kind;
  c.features.frame_shift = fm.frame_shift;
  c.features.values.resize(chunk_frames, fm.dim());
  const std::int64_t start = n >= chunk_frames ? rng.uniform_int(0, n - chunk_frames) : 0;
  c.offset = start;
  for (std::int64_t i = 0; i < chunk_frames; ++i) c.features.values.row(i) = fm.values.row((start + i) % n);
  c.labels.frame_shift = fm.frame_shift;
  c.labels.y.assign(static_cast<std::size_t>(chunk_frames), 0);
  if (!genuine) {
    const std::int64_t copies = n >= chunk_frames ? 1 : (chunk_frames + n - 1) / n;
    for (std::int64_t k = 0; k < copies; ++k)
      for (auto b : rec.annotation.boundaries) {
        const std::int64_t local = frame_of_sample(b, shift) + k * n - start;
        if (local < 0 || local >= chunk_frames) continue;
        mark_boundary(c.labels.y, local);
      }
  }
  return c;
}

}  // namespace spliceguard
