#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "spliceguard/error.hpp"

namespace spliceguard {

/// Chunk start offsets over a sequence of `total` units (samples or frames).
struct ChunkPlan {
  std::vector<std::int64_t> starts;
  std::int64_t chunk_len = 0;
  double overlap = 0.5;
  std::int64_t total = 0;

  std::int64_t stride() const {
    return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor(chunk_len * (1.0 - overlap))));
  }
};

/// Starts 0, stride, 2*stride, ... with the last chunk aligned to the end.
/// Sequences no longer than one chunk get a single chunk at 0.
inline ChunkPlan plan_chunks(std::int64_t total, std::int64_t chunk_len, double overlap = 0.5) {
  require(chunk_len >= 1, ErrorKind::argument, "plan_chunks: chunk_len must be >= 1");
  require(total >= 0, ErrorKind::argument, "plan_chunks: negative length");
  require(overlap >= 0.0 && overlap < 1.0, ErrorKind::argument, "plan_chunks: overlap must lie in [0, 1)");
  ChunkPlan plan{{}, chunk_len, overlap, total};
  const std::int64_t stride = plan.stride();
  std::int64_t s = 0;
  while (true) {
    plan.starts.push_back(s);
    if (s + chunk_len >= total) break;
    s += stride;
    if (s + chunk_len > total) {
      plan.starts.push_back(total - chunk_len);
      break;
    }
  }
  return plan;
}

/// Average overlapping chunk outputs per global index; positions at or
/// beyond `total` (padding) are discarded. A running mean is kept so that
/// identical contributions average back to exactly that value.
inline std::vector<double> merge_chunk_probs(const std::vector<std::vector<double>>& outputs, const ChunkPlan& plan,
                                             std::int64_t total) {
  require(outputs.size() == plan.starts.size(), ErrorKind::argument,
          "merge: " + std::to_string(outputs.size()) + " outputs for " + std::to_string(plan.starts.size()) + " chunks");
  std::vector<double> mean(static_cast<std::size_t>(std::max<std::int64_t>(total, 0)), 0.0);
  std::vector<std::int64_t> count(mean.size(), 0);
  for (std::size_t c = 0; c < outputs.size(); ++c) {
    const std::int64_t start = plan.starts[c];
    require(start >= 0 && (start < total || total == 0), ErrorKind::internal,
            "merge: chunk start " + std::to_string(start) + " outside sequence of " + std::to_string(total));
    require(static_cast<std::int64_t>(outputs[c].size()) == plan.chunk_len, ErrorKind::argument,
            "merge: chunk output length differs from plan");
    for (std::size_t j = 0; j < outputs[c].size(); ++j) {
      const std::int64_t g = start + static_cast<std::int64_t>(j);
      if (g >= total) break;
      const auto i = static_cast<std::size_t>(g);
      mean[i] += (outputs[c][j] - mean[i]) / static_cast<double>(++count[i]);
    }
  }
  for (std::size_t i = 0; i < mean.size(); ++i)
    require(count[i] > 0, ErrorKind::internal, "merge: position " + std::to_string(i) + " not covered by any chunk");
  return mean;
}

/// Frames with prob > threshold, each maximal run reduced to its argmax
/// (lowest index on ties).
inline std::vector<std::int64_t> detect_boundaries(const std::vector<double>& probs, double threshold) {
  require(threshold >= 0.0 && threshold <= 1.0, ErrorKind::argument, "detect_boundaries: threshold must lie in [0, 1]");
  std::vector<std::int64_t> out;
  std::size_t i = 0;
  while (i < probs.size()) {
    if (!(probs[i] > threshold)) {
      ++i;
      continue;
    }
    std::size_t best = i;
    for (; i < probs.size() && probs[i] > threshold; ++i)
      if (probs[i] > probs[best]) best = i;
    out.push_back(static_cast<std::int64_t>(best));
  }
  return out;
}

/// Mean of the n largest values (all values when fewer than n).
inline double utterance_score(const std::vector<double>& probs, int n = 4) {
  require(!probs.empty(), ErrorKind::argument, "utterance_score: empty probability sequence");
  require(n >= 1, ErrorKind::argument, "utterance_score: n must be >= 1");
  std::vector<double> v = probs;
  const auto k = std::min<std::size_t>(static_cast<std::size_t>(n), v.size());
  std::partial_sort(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end(), std::greater<>());
  return std::accumulate(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), 0.0) / static_cast<double>(k);
}

/// One operating point; higher scores mean "more fake".
struct DetPoint {
  double threshold;
  double far;  // genuine scored above threshold
  double frr;  // fake scored at or below threshold
};

/// Operating points at -inf and at every distinct score.
inline std::vector<DetPoint> det_curve(std::vector<double> genuine, std::vector<double> fake) {
  require(!genuine.empty() && !fake.empty(), ErrorKind::argument, "EER needs non-empty genuine and fake score lists");
  std::sort(genuine.begin(), genuine.end());
  std::sort(fake.begin(), fake.end());
  std::vector<double> thresholds;
  thresholds.reserve(genuine.size() + fake.size());
  std::merge(genuine.begin(), genuine.end(), fake.begin(), fake.end(), std::back_inserter(thresholds));
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  const auto G = static_cast<double>(genuine.size()), F = static_cast<double>(fake.size());
  std::vector<DetPoint> pts;
  pts.reserve(thresholds.size() + 1);
  pts.push_back({-std::numeric_limits<double>::infinity(), 1.0, 0.0});
  std::size_t gi = 0, fi = 0;  // counts of scores <= threshold
  for (double t : thresholds) {
    while (gi < genuine.size() && genuine[gi] <= t) ++gi;
    while (fi < fake.size() && fake[fi] <= t) ++fi;
    pts.push_back({t, (G - static_cast<double>(gi)) / G, static_cast<double>(fi) / F});
  }
  return pts;
}

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
};

/// EER by linear interpolation between the operating points that bracket
/// the FAR = FRR crossing.
inline EerResult compute_eer(const std::vector<double>& genuine, const std::vector<double>& fake) {
  const auto pts = det_curve(genuine, fake);
  for (std::size_t k = 1; k < pts.size(); ++k) {
    const double d1 = pts[k].far - pts[k].frr;
    if (d1 > 0.0) continue;
    const auto& a = pts[k - 1];
    const auto& b = pts[k];
    const double d0 = a.far - a.frr;
    const double t = d0 / (d0 - d1);
    const double eer = a.far + t * (b.far - a.far);
    const double threshold = std::isfinite(a.threshold) ? a.threshold + t * (b.threshold - a.threshold) : b.threshold;
    return {eer, threshold};
  }
  // At the largest score FAR = 0, so the loop always returns.
  fail(ErrorKind::internal, "compute_eer: no FAR/FRR crossing");
}

struct LocalizationCounts {
  std::int64_t matched = 0;
  std::int64_t predicted = 0;
  std::int64_t truth = 0;

  double precision() const { return predicted > 0 ? static_cast<double>(matched) / predicted : 0.0; }
  double recall() const { return truth > 0 ? static_cast<double>(matched) / truth : 0.0; }
  double f1() const {
    const double p = precision(), r = recall();
    return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
  }
  LocalizationCounts& operator+=(const LocalizationCounts& o) {
    matched += o.matched;
    predicted += o.predicted;
    truth += o.truth;
    return *this;
  }
};

/// Greedy one-to-one matching within `tolerance` frames, closest pairs
/// first (ties by predicted index, then true index).
inline LocalizationCounts localization_metrics(const std::vector<std::int64_t>& predicted,
                                               const std::vector<std::int64_t>& truth, std::int64_t tolerance = 5) {
  require(tolerance >= 0, ErrorKind::argument, "localization: tolerance must be >= 0");
  struct Pair {
    std::int64_t dist;
    std::size_t p, t;
  };
  std::vector<Pair> pairs;
  for (std::size_t i = 0; i < predicted.size(); ++i)
    for (std::size_t j = 0; j < truth.size(); ++j) {
      const std::int64_t d = std::abs(predicted[i] - truth[j]);
      if (d <= tolerance) pairs.push_back({d, i, j});
    }
  std::sort(pairs.begin(), pairs.end(),
            [](const Pair& a, const Pair& b) { return std::tie(a.dist, a.p, a.t) < std::tie(b.dist, b.p, b.t); });
  std::vector<bool> used_p(predicted.size()), used_t(truth.size());
  LocalizationCounts c{0, static_cast<std::int64_t>(predicted.size()), static_cast<std::int64_t>(truth.size())};
  for (const auto& pr : pairs) {
    if (used_p[pr.p] || used_t[pr.t]) continue;
    used_p[pr.p] = used_t[pr.t] = true;
    ++c.matched;
  }
  return c;
}

}  // namespace spliceguard
