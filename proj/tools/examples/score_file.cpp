// Score a WAV with a trained checkpoint: spliceguard_score model.sgck file.wav

#include <cstdio>
#include <exception>

#include "spliceguard/spliceguard.hpp"

using namespace spliceguard;

int main(int argc, char** argv) {
  if (argc != 3) {
    std::fprintf(stderr, "usage: %s model.sgck file.wav\n", argv[0]);
    return 1;
  }
  try {
    const auto ck = nn::load_checkpoint(argv[1]);
    const auto det = detector_from_checkpoint(ck);
    InferenceConfig cfg;
    if (ck.meta.contains("threshold")) cfg.threshold = ck.meta.at("threshold").get<double>();

    UtteranceRecord rec;
    rec.id = argv[2];
    rec.audio = std::make_shared<Waveform>(read_wav(argv[2]));
    FeaturePipeline fbank;
    const auto r = infer_record(det, rec, fbank, cfg);

    std::printf("score %.4f (mean of top %d frame probabilities)\n", utterance_score(r.probs, cfg.top_n), cfg.top_n);
    for (auto t : detect_boundaries(r.probs, cfg.threshold))
      std::printf("boundary at frame %lld (%.2f s), p=%.3f\n", static_cast<long long>(t), t * 0.010,
                  r.probs[static_cast<std::size_t>(t)]);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
