#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "spliceguard/audio.hpp"
#include "spliceguard/error.hpp"
#include "spliceguard/matrix.hpp"

namespace spliceguard {

enum class WindowType { hamming, povey };

struct FbankConfig {
  int sample_rate = 16000;
  double frame_length = 0.025;  // seconds
  double frame_shift = 0.010;   // seconds
  int n_fft = 512;
  int n_mels = 80;
  double preemph = 0.97;
  WindowType window = WindowType::hamming;
  double log_floor = 1e-10;
  double low_freq = 20.0;
  double high_freq = 0.0;  // <= 0 means Nyquist
  int delta_window = 2;

  int frame_length_samples() const {
    return static_cast<int>(std::lround(frame_length * sample_rate));
  }
  int frame_shift_samples() const {
    return static_cast<int>(std::lround(frame_shift * sample_rate));
  }
  double upper_freq() const { return high_freq > 0.0 ? high_freq : sample_rate / 2.0; }

  void validate() const {
    require(sample_rate > 0, ErrorKind::config, "fbank: sample_rate must be positive");
    require(frame_length_samples() >= 1 && frame_shift_samples() >= 1, ErrorKind::config,
            "fbank: frame length and shift must cover at least one sample");
    require(n_fft >= frame_length_samples() && (n_fft & (n_fft - 1)) == 0, ErrorKind::config,
            "fbank: n_fft must be a power of two no smaller than the frame length");
    require(n_mels >= 1, ErrorKind::config, "fbank: n_mels must be positive");
    require(low_freq >= 0.0 && low_freq < upper_freq() && upper_freq() <= sample_rate / 2.0,
            ErrorKind::config, "fbank: invalid frequency range");
    require(log_floor > 0.0, ErrorKind::config, "fbank: log_floor must be positive");
    require(delta_window >= 1, ErrorKind::config, "fbank: delta_window must be positive");
  }
};

/// Number of complete frames in a signal of `num_samples` samples.
inline std::int64_t num_frames(std::int64_t num_samples, int frame_len, int frame_shift) {
  if (num_samples < frame_len) return 0;
  return 1 + (num_samples - frame_len) / frame_shift;
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Triangular HTK-mel filterbank over power-spectrum bins [0, n_fft/2].
/// Row m is filter m; weights are triangles in the mel domain.
inline RowMatrix<double> mel_filterbank(const FbankConfig& cfg) {
  const int bins = cfg.n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(cfg.low_freq);
  const double mel_hi = hz_to_mel(cfg.upper_freq());
  const double step = (mel_hi - mel_lo) / (cfg.n_mels + 1);
  RowMatrix<double> fb = RowMatrix<double>::Zero(cfg.n_mels, bins);
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double left = mel_lo + m * step;
    const double center = left + step;
    const double right = center + step;
    for (int k = 0; k < bins; ++k) {
      const double mel = hz_to_mel(static_cast<double>(k) * cfg.sample_rate / cfg.n_fft);
      if (mel > left && mel < right)
        fb(m, k) = mel <= center ? (mel - left) / (center - left) : (right - mel) / (right - center);
    }
  }
  return fb;
}

/// Center frequency (Hz) of each mel filter.
inline std::vector<double> mel_centers(const FbankConfig& cfg) {
  const double mel_lo = hz_to_mel(cfg.low_freq);
  const double step = (hz_to_mel(cfg.upper_freq()) - mel_lo) / (cfg.n_mels + 1);
  std::vector<double> out(cfg.n_mels);
  for (int m = 0; m < cfg.n_mels; ++m) out[m] = mel_to_hz(mel_lo + (m + 1) * step);
  return out;
}

inline std::vector<double> analysis_window(WindowType type, int len) {
  std::vector<double> w(len, 1.0);
  if (len == 1) return w;
  for (int i = 0; i < len; ++i) {
    const double c = std::cos(2.0 * M_PI * i / (len - 1));
    w[i] = type == WindowType::hamming ? 0.54 - 0.46 * c : std::pow(0.5 - 0.5 * c, 0.85);
  }
  return w;
}

/// Reusable log-mel extractor; holds the window, filterbank and FFT plan.
class FbankExtractor {
 public:
  explicit FbankExtractor(FbankConfig cfg = {})
      : cfg_(cfg),
        window_((cfg_.validate(), analysis_window(cfg_.window, cfg_.frame_length_samples()))),
        filters_(mel_filterbank(cfg_)) {}

  const FbankConfig& config() const { return cfg_; }

  std::int64_t frames_for(std::int64_t num_samples) const {
    return num_frames(num_samples, cfg_.frame_length_samples(), cfg_.frame_shift_samples());
  }

  /// T x n_mels log mel energies.
  RowMatrix<double> log_mel(const Waveform& w) {
    require(w.sample_rate == cfg_.sample_rate, ErrorKind::argument,
            "fbank: waveform sample rate " + std::to_string(w.sample_rate) +
                " differs from configured " + std::to_string(cfg_.sample_rate));
    const int flen = cfg_.frame_length_samples();
    const int shift = cfg_.frame_shift_samples();
    const std::int64_t frames = frames_for(static_cast<std::int64_t>(w.size()));
    require(frames >= 1, ErrorKind::argument, "fbank: waveform shorter than one frame");

    const int bins = cfg_.n_fft / 2 + 1;
    RowMatrix<double> out(frames, cfg_.n_mels);
    std::vector<double> frame(cfg_.n_fft, 0.0);
    std::vector<std::complex<double>> spectrum;
    Eigen::VectorXd power(bins);
    for (std::int64_t t = 0; t < frames; ++t) {
      const float* src = w.samples.data() + t * shift;
      std::fill(frame.begin(), frame.end(), 0.0);
      for (int i = flen - 1; i >= 0; --i) {
        const double prev = i > 0 ? src[i - 1] : src[0];
        frame[i] = (src[i] - cfg_.preemph * prev) * window_[i];
      }
      fft_.fwd(spectrum, frame);
      for (int k = 0; k < bins; ++k) power[k] = std::norm(spectrum[k]);
      const Eigen::VectorXd energy = filters_ * power;
      for (int m = 0; m < cfg_.n_mels; ++m) out(t, m) = std::log(std::max(energy[m], cfg_.log_floor));
    }
    return out;
  }

 private:
  FbankConfig cfg_;
  std::vector<double> window_;
  RowMatrix<double> filters_;
  Eigen::FFT<double> fft_;
};

/// Log mel filterbank energies (T x n_mels).
inline RowMatrix<double> fbank80(const Waveform& w, const FbankConfig& cfg = {}) {
  FbankExtractor ex(cfg);
  return ex.log_mel(w);
}

/// Regression deltas with half-window `half`, edge frames replicated.
template <class S>
RowMatrix<S> regression_delta(const RowMatrix<S>& f, int half = 2) {
  const Eigen::Index rows = f.rows();
  RowMatrix<S> out = RowMatrix<S>::Zero(rows, f.cols());
  S denom = 0;
  for (int k = 1; k <= half; ++k) denom += static_cast<S>(k * k);
  denom *= 2;
  for (Eigen::Index t = 0; t < rows; ++t) {
    for (int k = 1; k <= half; ++k) {
      const Eigen::Index ahead = std::min<Eigen::Index>(t + k, rows - 1);
      const Eigen::Index behind = std::max<Eigen::Index>(t - k, 0);
      out.row(t) += static_cast<S>(k) * (f.row(ahead) - f.row(behind));
    }
  }
  return out / denom;
}

/// [F | delta(F) | delta(delta(F))].
template <class S>
RowMatrix<S> add_deltas(const RowMatrix<S>& f, int half = 2) {
  require(f.rows() >= 1, ErrorKind::argument, "add_deltas: empty feature matrix");
  const RowMatrix<S> d1 = regression_delta(f, half);
  const RowMatrix<S> d2 = regression_delta(d1, half);
  RowMatrix<S> out(f.rows(), 3 * f.cols());
  out << f, d1, d2;
  return out;
}

enum class FeatureKind : std::uint32_t { fbank240 = 0, external = 1 };

inline constexpr int kFbankDim = 240;
inline constexpr int kExternalDim = 768;
inline constexpr double kExternalFrameShift = 0.020;

struct FeatureMatrix {
  RowMatrix<float> values;
  double frame_shift = 0.010;
  FeatureKind kind = FeatureKind::fbank240;

  std::int64_t frames() const { return values.rows(); }
  std::int64_t dim() const { return values.cols(); }
};

/// Fbank + deltas as a 240-column FeatureMatrix.
class FeaturePipeline {
 public:
  explicit FeaturePipeline(FbankConfig cfg = {}) : extractor_(cfg) {}

  const FbankConfig& config() const { return extractor_.config(); }

  std::int64_t frames_for(std::int64_t num_samples) const { return extractor_.frames_for(num_samples); }

  FeatureMatrix compute(const Waveform& w) {
    FeatureMatrix fm;
    fm.values = add_deltas(extractor_.log_mel(w), config().delta_window).cast<float>();
    fm.frame_shift = config().frame_shift;
    fm.kind = FeatureKind::fbank240;
    return fm;
  }

 private:
  FbankExtractor extractor_;
};

// Feature file: "SGFT", u32 version, u32 T, u32 D, f32 frame_shift, u32 kind,
// then T*D little-endian float32, row-major.
namespace feature_file {
inline constexpr char kMagic[4] = {'S', 'G', 'F', 'T'};
inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::size_t kHeaderBytes = 24;
}  // namespace feature_file

inline std::vector<unsigned char> encode_features(const FeatureMatrix& fm) {
  const auto rows = static_cast<std::uint32_t>(fm.values.rows());
  const auto cols = static_cast<std::uint32_t>(fm.values.cols());
  const float shift = static_cast<float>(fm.frame_shift);
  const auto kind = static_cast<std::uint32_t>(fm.kind);
  std::vector<unsigned char> out(feature_file::kHeaderBytes + sizeof(float) * fm.values.size());
  unsigned char* p = out.data();
  std::memcpy(p, feature_file::kMagic, 4);
  std::memcpy(p + 4, &feature_file::kVersion, 4);
  std::memcpy(p + 8, &rows, 4);
  std::memcpy(p + 12, &cols, 4);
  std::memcpy(p + 16, &shift, 4);
  std::memcpy(p + 20, &kind, 4);
  if (fm.values.size() > 0)
    std::memcpy(p + feature_file::kHeaderBytes, fm.values.data(), sizeof(float) * fm.values.size());
  return out;
}

inline FeatureMatrix decode_features(const std::vector<unsigned char>& bytes) {
  require(bytes.size() >= feature_file::kHeaderBytes, ErrorKind::format, "feature file: truncated header");
  require(std::memcmp(bytes.data(), feature_file::kMagic, 4) == 0, ErrorKind::format,
          "feature file: bad magic");
  std::uint32_t version, rows, cols, kind;
  float shift;
  std::memcpy(&version, bytes.data() + 4, 4);
  std::memcpy(&rows, bytes.data() + 8, 4);
  std::memcpy(&cols, bytes.data() + 12, 4);
  std::memcpy(&shift, bytes.data() + 16, 4);
  std::memcpy(&kind, bytes.data() + 20, 4);
  require(version == feature_file::kVersion, ErrorKind::format,
          "feature file: unsupported version " + std::to_string(version));
  require(kind <= 1, ErrorKind::format, "feature file: unknown kind " + std::to_string(kind));
  const auto fkind = static_cast<FeatureKind>(kind);
  const std::uint32_t want = fkind == FeatureKind::fbank240 ? kFbankDim : kExternalDim;
  require(cols == want, ErrorKind::format,
          "feature file: dimension " + std::to_string(cols) + " does not match kind (expected " +
              std::to_string(want) + ")");
  require(std::isfinite(shift) && shift > 0.0f, ErrorKind::format, "feature file: invalid frame shift");
  const std::size_t count = static_cast<std::size_t>(rows) * cols;
  require(bytes.size() == feature_file::kHeaderBytes + count * sizeof(float), ErrorKind::format,
          "feature file: payload size does not match header");
  FeatureMatrix fm;
  fm.kind = fkind;
  fm.frame_shift = shift;
  fm.values.resize(rows, cols);
  if (count > 0) std::memcpy(fm.values.data(), bytes.data() + feature_file::kHeaderBytes, count * sizeof(float));
  for (Eigen::Index i = 0; i < fm.values.size(); ++i)
    require(std::isfinite(fm.values.data()[i]), ErrorKind::format, "feature file: non-finite value");
  return fm;
}

inline void write_features(const FeatureMatrix& fm, const std::filesystem::path& path) {
  write_file_bytes(path, encode_features(fm));
}

inline FeatureMatrix read_features(const std::filesystem::path& path) {
  return decode_features(read_file_bytes(path));
}

/// Load precomputed 768-d embeddings (e.g. exported Wav2Vec2 outputs).
inline FeatureMatrix import_external_features(const std::filesystem::path& path) {
  FeatureMatrix fm = read_features(path);
  require(fm.kind == FeatureKind::external, ErrorKind::format,
          "expected an external-feature file, got fbank240 in " + path.string());
  return fm;
}

}  // namespace spliceguard
