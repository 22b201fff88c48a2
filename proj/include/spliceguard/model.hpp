#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spliceguard/features.hpp"
#include "spliceguard/nn/checkpoint.hpp"
#include "spliceguard/nn/layers.hpp"
#include "spliceguard/rng.hpp"

namespace spliceguard {

/// Boundary detector hyper-parameters. Defaults are the full-size network:
/// C(5,2,1) entry conv to 512 channels, 12 residual blocks, 128-d
/// embeddings, two encoder layers with 4 heads and FFN 1024, BiLSTM(1, 128).
struct DetectorConfig {
  int feature_dim = kFbankDim;
  int channels = 512;
  int res_blocks = 12;
  int emb_dim = 128;
  bool concat_features = false;
  int enc_layers = 2;
  int heads = 4;
  int ffn = 1024;
  int lstm_hidden = 128;
  bool positional_encoding = true;

  static DetectorConfig paper_fbank() { return {}; }

  static DetectorConfig paper_wav2vec() {
    DetectorConfig c;
    c.feature_dim = kExternalDim;
    c.concat_features = true;
    return c;
  }

  /// Desk-scale network used for the toy experiments.
  static DetectorConfig toy(int feature_dim = kFbankDim) {
    DetectorConfig c;
    c.feature_dim = feature_dim;
    c.channels = 32;
    c.res_blocks = 2;
    c.emb_dim = 32;
    c.enc_layers = 1;
    c.heads = 4;
    c.ffn = 64;
    c.lstm_hidden = 16;
    return c;
  }

  void validate() const {
    require(feature_dim >= 1 && channels >= 1 && res_blocks >= 0 && emb_dim >= 1 && enc_layers >= 0 &&
                heads >= 1 && ffn >= 1 && lstm_hidden >= 1,
            ErrorKind::config, "detector config: sizes must be positive");
    require(emb_dim % heads == 0, ErrorKind::config, "detector config: emb_dim must be divisible by heads");
  }

  bool operator==(const DetectorConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const DetectorConfig& c) {
  j = {{"feature_dim", c.feature_dim}, {"channels", c.channels},       {"res_blocks", c.res_blocks},
       {"emb_dim", c.emb_dim},         {"concat_features", c.concat_features}, {"enc_layers", c.enc_layers},
       {"heads", c.heads},             {"ffn", c.ffn},                 {"lstm_hidden", c.lstm_hidden},
       {"positional_encoding", c.positional_encoding}};
}

inline void from_json(const nlohmann::json& j, DetectorConfig& c) {
  static const std::vector<std::string> keys = {"feature_dim", "channels",   "res_blocks", "emb_dim",
                                                "concat_features", "enc_layers", "heads",   "ffn",
                                                "lstm_hidden", "positional_encoding"};
  require(j.is_object(), ErrorKind::config, "model config must be an object");
  for (const auto& [k, _] : j.items())
    require(std::find(keys.begin(), keys.end(), k) != keys.end(), ErrorKind::config, "model config: unknown key " + k);
  auto get = [&](const char* k, auto& dst) {
    if (j.contains(k)) dst = j.at(k).get<std::decay_t<decltype(dst)>>();
  };
  get("feature_dim", c.feature_dim);
  get("channels", c.channels);
  get("res_blocks", c.res_blocks);
  get("emb_dim", c.emb_dim);
  get("concat_features", c.concat_features);
  get("enc_layers", c.enc_layers);
  get("heads", c.heads);
  get("ffn", c.ffn);
  get("lstm_hidden", c.lstm_hidden);
  get("positional_encoding", c.positional_encoding);
  c.validate();
}

/// Frame-level splice-boundary detector:
/// features -> ResNet-1D -> (optional feature/embedding fusion) ->
/// Transformer encoder -> BiLSTM -> ReLU -> Linear -> per-frame logit.
template <class S>
class Detector {
 public:
  explicit Detector(DetectorConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    const auto d = static_cast<std::size_t>(cfg_.feature_dim);
    const auto ch = static_cast<std::size_t>(cfg_.channels);
    const auto emb = static_cast<std::size_t>(cfg_.emb_dim);
    params_.add("resnet.entry.weight", {ch, d, 5});
    for (int b = 0; b < cfg_.res_blocks; ++b) {
      params_.add(block_name(b) + ".conv1.weight", {ch, ch, 1});
      params_.add(block_name(b) + ".conv2.weight", {ch, ch, 1});
    }
    params_.add("resnet.exit.weight", {emb, ch, 1});
    params_.add("resnet.exit.bias", {emb});
    if (cfg_.concat_features) {
      params_.add("fuse.proj.weight", {emb, d + emb});
      params_.add("fuse.proj.bias", {emb});
    }
    for (int l = 0; l < cfg_.enc_layers; ++l)
      nn::add_encoder_layer_params(params_, encoder_name(l), emb, static_cast<std::size_t>(cfg_.ffn));
    nn::add_bilstm_params(params_, "bilstm", emb, static_cast<std::size_t>(cfg_.lstm_hidden));
    params_.add("head.weight", {1, 2 * static_cast<std::size_t>(cfg_.lstm_hidden)});
    params_.add("head.bias", {1});
  }

  Detector(DetectorConfig cfg, nn::ParameterSet<S> params) : Detector(cfg) {
    require(params.same_manifest(params_), ErrorKind::argument, "detector: parameter manifest does not match config");
    params_ = std::move(params);
  }

  const DetectorConfig& config() const { return cfg_; }
  nn::ParameterSet<S>& params() { return params_; }
  const nn::ParameterSet<S>& params() const { return params_; }

  /// Seeded initialization: weights uniform in +-1/sqrt(fan_in), biases
  /// zero, norm gains one, LSTM forget-gate bias one.
  void initialize(std::uint64_t seed) {
    Rng rng(seed);
    for (auto& p : params_) {
      auto& data = p.value.data;
      const auto& name = p.name;
      const bool is_gain = name.ends_with(".gain");
      const bool is_bias = name.ends_with(".bias") || name.ends_with(".b1") || name.ends_with(".b2") ||
                           name.ends_with(".bq") || name.ends_with(".bv") ||
                           name.ends_with(".bo");
      if (is_gain) {
        std::fill(data.begin(), data.end(), S(1));
      } else if (is_bias) {
        std::fill(data.begin(), data.end(), S(0));
        if (name.starts_with("bilstm.")) {
          const std::size_t h = data.size() / 4;
          for (std::size_t j = h; j < 2 * h; ++j) data[j] = S(1);
        }
      } else {
        const double fan_in = static_cast<double>(p.value.size() / p.value.shape[0]);
        const double bound = 1.0 / std::sqrt(fan_in);
        for (auto& v : data) v = static_cast<S>(rng.uniform(-bound, bound));
      }
    }
  }

  /// Frame embeddings S (T x emb_dim) from features X (T x feature_dim).
  nn::Var<S> resnet(nn::Tape<S>& tape, nn::Var<S> x) const {
    require(x.cols() == cfg_.feature_dim, ErrorKind::shape,
            "detector expects " + std::to_string(cfg_.feature_dim) + "-d features, got " + std::to_string(x.cols()));
    auto p = [&](const std::string& n) { return tape.parameter(params_, n); };
    nn::Var<S> h = nn::conv1d(x, p("resnet.entry.weight"), std::nullopt, 2, 1);
    for (int b = 0; b < cfg_.res_blocks; ++b) {
      const std::string base = block_name(b);
      nn::Var<S> r = nn::relu(nn::conv1d(h, p(base + ".conv1.weight"), std::nullopt, 0, 1));
      r = nn::conv1d(r, p(base + ".conv2.weight"), std::nullopt, 0, 1);
      h = nn::relu(nn::add(h, r));
    }
    return nn::conv1d(h, p("resnet.exit.weight"), p("resnet.exit.bias"), 0, 1);
  }

  /// Z = project([X | S]) when concatenation is on, otherwise Z = S.
  nn::Var<S> fuse(nn::Tape<S>& tape, nn::Var<S> x, nn::Var<S> s) const {
    require(x.rows() == s.rows(), ErrorKind::shape, "fuse: feature and embedding frame counts differ");
    if (!cfg_.concat_features) return s;
    return nn::linear(nn::concat_cols<S>({x, s}), tape.parameter(params_, "fuse.proj.weight"),
                      tape.parameter(params_, "fuse.proj.bias"));
  }

  /// Per-frame boundary logits (T x 1) from fused embeddings.
  nn::Var<S> classifier_logits(nn::Tape<S>& tape, nn::Var<S> z) const {
    nn::Var<S> h = z;
    if (cfg_.positional_encoding) h = nn::add(h, tape.constant(nn::sinusoidal_positions<S>(z.rows(), z.cols())));
    for (int l = 0; l < cfg_.enc_layers; ++l)
      h = nn::transformer_encoder_layer(tape, params_, encoder_name(l), h, cfg_.heads);
    h = nn::relu(nn::bilstm(tape, params_, "bilstm", h));
    return nn::linear(h, tape.parameter(params_, "head.weight"), tape.parameter(params_, "head.bias"));
  }

  nn::Var<S> logits(nn::Tape<S>& tape, nn::Var<S> x) const {
    return classifier_logits(tape, fuse(tape, x, resnet(tape, x)));
  }

  nn::Var<S> logits(nn::Tape<S>& tape, const RowMatrix<S>& features) const {
    require(features.rows() >= 1, ErrorKind::argument, "detector: empty feature sequence");
    return logits(tape, tape.constant(nn::Tensor<S>::from_matrix(features)));
  }

  /// Per-frame boundary probabilities, inference only.
  std::vector<S> probabilities(const RowMatrix<S>& features) const {
    nn::Tape<S> tape(false);
    const auto& z = logits(tape, features).value();
    std::vector<S> out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = nn::detail::sigmoid(z[i]);
    return out;
  }

 private:
  static std::string block_name(int b) { return "resnet.block" + std::to_string(b); }
  static std::string encoder_name(int l) { return "encoder.layer" + std::to_string(l); }

  DetectorConfig cfg_;
  nn::ParameterSet<S> params_;
};

/// Per-frame probabilities for an already-extracted feature matrix.
inline std::vector<float> detector_forward(const Detector<float>& det, const FeatureMatrix& fm) {
  require(fm.dim() == det.config().feature_dim, ErrorKind::shape,
          "feature dimension " + std::to_string(fm.dim()) + " does not match model (" +
              std::to_string(det.config().feature_dim) + ")");
  return det.probabilities(fm.values);
}

inline std::vector<float> detector_forward(const Detector<float>& det, const Waveform& w, FeaturePipeline& features) {
  return detector_forward(det, features.compute(w));
}

/// Detector params + config as a checkpoint (config stored under meta.model).
inline nn::Checkpoint make_checkpoint(const Detector<float>& det, std::int64_t step = 0,
                                      nlohmann::json extra = nlohmann::json::object()) {
  nn::Checkpoint ck;
  ck.params = det.params();
  ck.step = step;
  ck.meta = std::move(extra);
  ck.meta["model"] = det.config();
  return ck;
}

inline Detector<float> detector_from_checkpoint(const nn::Checkpoint& ck) {
  require(ck.meta.contains("model"), ErrorKind::format, "checkpoint has no model config");
  return Detector<float>(ck.meta.at("model").get<DetectorConfig>(), ck.params);
}

/// Elementwise mean of several checkpoints' parameters.
inline Detector<float> average_checkpoints(const std::vector<Detector<float>>& models) {
  require(!models.empty(), ErrorKind::argument, "average_checkpoints: empty list");
  std::vector<nn::ParameterSet<float>> sets;
  sets.reserve(models.size());
  for (const auto& m : models) {
    require(m.config() == models.front().config(), ErrorKind::argument, "average_checkpoints: configs differ");
    sets.push_back(m.params());
  }
  return Detector<float>(models.front().config(), nn::average_parameters(sets));
}

}  // namespace spliceguard
