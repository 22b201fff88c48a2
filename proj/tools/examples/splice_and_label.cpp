// Build one partially spliced utterance and print its ground truth.

#include <cstdio>

#include "spliceguard/spliceguard.hpp"

using namespace spliceguard;

int main() {
  ToyCorpusConfig gcfg;
  gcfg.num_utterances = 4;
  const auto genuine = generate_toy_corpus(gcfg, 1);

  ToyCorpusConfig fcfg = gcfg;
  fcfg.family = ToyFamily::filtered_noise;
  fcfg.cls = UtteranceClass::fully_fake;
  fcfg.id_prefix = "fake";
  const auto fake = generate_toy_corpus(fcfg, 2);

  Rng rng(3);
  const auto& target = genuine[0];
  const SpliceResult res = splice_replace(target, fake, 2, rng);
  std::printf("%s: %zu samples -> %zu samples after replacing 2 words\n", target.id.c_str(), target.waveform().size(),
              res.audio.size());
  for (const auto& p : res.annotation.provenance)
    std::printf("  %s[%lld,%lld) -> output [%lld,%lld)\n", p.donor_id.c_str(),
                static_cast<long long>(p.donor_segment.start), static_cast<long long>(p.donor_segment.end),
                static_cast<long long>(p.output_segment.start), static_cast<long long>(p.output_segment.end));

  FeaturePipeline fbank;
  const auto frames = fbank.frames_for(static_cast<std::int64_t>(res.audio.size()));
  const FrameLabels labels = labels_from_annotation(res.annotation, 0.010, 16000, frames);
  std::printf("boundaries (samples):");
  for (auto b : res.annotation.boundaries) std::printf(" %lld", static_cast<long long>(b));
  std::printf("\npositive frames:");
  for (std::size_t t = 0; t < labels.y.size(); ++t)
    if (labels.y[t]) std::printf(" %zu", t);
  std::printf("\n");
  write_wav(res.audio, "spliced.wav");
  return 0;
}
