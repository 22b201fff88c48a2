#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spliceguard/audio.hpp"
#include "spliceguard/nn/optim.hpp"
#include "spliceguard/nn/tensor.hpp"

namespace spliceguard::nn {

/// Serialized parameter set.
///
/// Layout: "SGCK", u32 version, u64 header length, JSON header (UTF-8),
/// then little-endian float32 arrays in manifest order: parameter values,
/// followed by Adam first and second moments when `optimizer_state` is set.
/// The header is {"version", "params": [{"name", "shape"}], "optimizer_state",
/// "step", "meta"}; `meta` carries caller data such as the model config.
struct Checkpoint {
  ParameterSet<float> params;
  std::optional<AdamState<float>> optimizer;
  std::int64_t step = 0;
  nlohmann::json meta = nlohmann::json::object();
};

namespace checkpoint_detail {
inline constexpr char kMagic[4] = {'S', 'G', 'C', 'K'};
inline constexpr std::uint32_t kVersion = 1;

inline void append_floats(std::vector<unsigned char>& out, const AlignedVector<float>& v) {
  const std::size_t at = out.size();
  out.resize(at + v.size() * sizeof(float));
  if (!v.empty()) std::memcpy(out.data() + at, v.data(), v.size() * sizeof(float));
}
}  // namespace checkpoint_detail

inline std::vector<unsigned char> encode_checkpoint(const Checkpoint& ck) {
  using namespace checkpoint_detail;
  nlohmann::json manifest = nlohmann::json::array();
  for (const auto& p : ck.params) manifest.push_back({{"name", p.name}, {"shape", p.value.shape}});
  const nlohmann::json header = {{"version", kVersion},
                                 {"params", manifest},
                                 {"optimizer_state", ck.optimizer.has_value()},
                                 {"step", ck.step},
                                 {"meta", ck.meta}};
  const std::string text = header.dump();
  const std::uint64_t len = text.size();

  std::vector<unsigned char> out(16);
  std::memcpy(out.data(), kMagic, 4);
  std::memcpy(out.data() + 4, &kVersion, 4);
  std::memcpy(out.data() + 8, &len, 8);
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& p : ck.params) append_floats(out, p.value.data);
  if (ck.optimizer) {
    for (const auto& m : ck.optimizer->m) append_floats(out, m.data);
    for (const auto& v : ck.optimizer->v) append_floats(out, v.data);
  }
  return out;
}

inline Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes) {
  using namespace checkpoint_detail;
  require(bytes.size() >= 16 && std::memcmp(bytes.data(), kMagic, 4) == 0, ErrorKind::format,
          "checkpoint: bad magic");
  std::uint32_t version;
  std::uint64_t len;
  std::memcpy(&version, bytes.data() + 4, 4);
  std::memcpy(&len, bytes.data() + 8, 8);
  require(version == kVersion, ErrorKind::format, "checkpoint: unsupported version");
  require(len <= bytes.size() - 16, ErrorKind::format, "checkpoint: truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(len));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format, std::string("checkpoint: header is not valid JSON: ") + e.what());
  }

  Checkpoint ck;
  std::size_t pos = 16 + len;
  auto take = [&](Tensor<float>& t) {
    const std::size_t n = t.size() * sizeof(float);
    require(n <= bytes.size() - pos, ErrorKind::format, "checkpoint: payload truncated");
    if (n > 0) std::memcpy(t.data.data(), bytes.data() + pos, n);
    pos += n;
  };
  try {
    for (const auto& entry : header.at("params")) {
      const std::size_t i = ck.params.add(entry.at("name").get<std::string>(), entry.at("shape").get<Shape>());
      take(ck.params[i].value);
    }
    ck.step = header.at("step").get<std::int64_t>();
    ck.meta = header.at("meta");
    if (header.at("optimizer_state").get<bool>()) {
      AdamState<float> st;
      st.step = ck.step;
      for (const auto& p : ck.params) st.m.emplace_back(p.value.shape);
      for (const auto& p : ck.params) st.v.emplace_back(p.value.shape);
      for (auto& m : st.m) take(m);
      for (auto& v : st.v) take(v);
      ck.optimizer = std::move(st);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format, std::string("checkpoint: malformed header: ") + e.what());
  }
  require(pos == bytes.size(), ErrorKind::format, "checkpoint: trailing bytes after payload");
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  write_file_bytes(path, encode_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file_bytes(path));
}

/// Elementwise mean of parameter sets that share one manifest.
inline ParameterSet<float> average_parameters(const std::vector<ParameterSet<float>>& sets) {
  require(!sets.empty(), ErrorKind::argument, "average: no checkpoints");
  for (const auto& s : sets)
    require(s.same_manifest(sets.front()), ErrorKind::argument, "average: checkpoint manifests differ");
  ParameterSet<float> out;
  for (std::size_t p = 0; p < sets.front().size(); ++p) {
    const auto& first = sets.front()[p];
    const std::size_t i = out.add(first.name, first.value.shape);
    auto& dst = out[i].value.data;
    for (std::size_t j = 0; j < dst.size(); ++j) {
      double acc = 0.0;
      for (const auto& s : sets) acc += s[p].value.data[j];
      dst[j] = static_cast<float>(acc / static_cast<double>(sets.size()));
    }
  }
  return out;
}

}  // namespace spliceguard::nn
