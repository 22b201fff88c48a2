#pragma once

#include <filesystem>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spliceguard/audio.hpp"
#include "spliceguard/corpus.hpp"
#include "spliceguard/error.hpp"
#include "spliceguard/features.hpp"

namespace spliceguard {

/// One JSON-lines manifest row. Paths are relative to the manifest's
/// directory unless absolute.
struct ManifestEntry {
  std::string id;
  std::string path;
  UtteranceClass cls = UtteranceClass::genuine;
  std::vector<WordSegment> segments;
  std::vector<std::int64_t> boundaries;
  std::string source;  // optional; empty means the entry is its own source

  bool operator==(const ManifestEntry&) const = default;
};

inline nlohmann::ordered_json to_json(const ManifestEntry& e) {
  nlohmann::ordered_json j;
  j["id"] = e.id;
  j["path"] = e.path;
  j["class"] = to_string(e.cls);
  auto segs = nlohmann::ordered_json::array();
  for (const auto& s : e.segments) segs.push_back({s.start, s.end});
  j["segments"] = segs;
  j["boundaries"] = e.boundaries;
  if (!e.source.empty()) j["source"] = e.source;
  return j;
}

namespace manifest_detail {

inline std::int64_t integer(const nlohmann::json& v, const std::string& where) {
  require(v.is_number_integer(), ErrorKind::format, where + ": expected an integer");
  return v.get<std::int64_t>();
}

}  // namespace manifest_detail

/// Parse and schema-check one manifest object.
inline ManifestEntry manifest_entry_from_json(const nlohmann::json& j) {
  using manifest_detail::integer;
  require(j.is_object(), ErrorKind::format, "manifest line is not a JSON object");
  for (const auto& [key, _] : j.items())
    require(key == "id" || key == "path" || key == "class" || key == "segments" || key == "boundaries" ||
                key == "source",
            ErrorKind::format, "manifest: unknown field '" + key + "'");
  for (const char* key : {"id", "path", "class", "segments", "boundaries"})
    require(j.contains(key), ErrorKind::format, std::string("manifest: missing field '") + key + "'");
  require(j["id"].is_string() && !j["id"].get<std::string>().empty(), ErrorKind::format, "manifest: 'id' must be a non-empty string");
  require(j["path"].is_string(), ErrorKind::format, "manifest: 'path' must be a string");
  require(j["class"].is_string(), ErrorKind::format, "manifest: 'class' must be a string");
  ManifestEntry e;
  e.id = j["id"].get<std::string>();
  e.path = j["path"].get<std::string>();
  e.cls = class_from_string(j["class"].get<std::string>());
  require(j["segments"].is_array(), ErrorKind::format, e.id + ": 'segments' must be an array");
  for (const auto& s : j["segments"]) {
    require(s.is_array() && s.size() == 2, ErrorKind::format, e.id + ": each segment must be [start, end]");
    e.segments.push_back({integer(s[0], e.id + " segment"), integer(s[1], e.id + " segment")});
  }
  require(j["boundaries"].is_array(), ErrorKind::format, e.id + ": 'boundaries' must be an array");
  for (const auto& b : j["boundaries"]) e.boundaries.push_back(integer(b, e.id + " boundary"));
  if (j.contains("source")) {
    require(j["source"].is_string(), ErrorKind::format, e.id + ": 'source' must be a string");
    e.source = j["source"].get<std::string>();
  }
  // Length-independent structural checks; bounds against the audio happen at load.
  UtteranceRecord probe;
  probe.id = e.id;
  probe.segments = e.segments;
  probe.cls = e.cls;
  probe.annotation.boundaries = e.boundaries;
  probe.validate(std::numeric_limits<std::int64_t>::max());
  return e;
}

inline std::string encode_manifest(const std::vector<ManifestEntry>& entries) {
  std::string out;
  for (const auto& e : entries) out += to_json(e).dump() + "\n";
  return out;
}

inline std::vector<ManifestEntry> decode_manifest(const std::string& text) {
  std::vector<ManifestEntry> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& ex) {
      fail(ErrorKind::format, "manifest line " + std::to_string(lineno) + ": " + ex.what());
    }
    try {
      out.push_back(manifest_entry_from_json(j));
    } catch (const Error& ex) {
      fail(ex.kind(), "manifest line " + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return out;
}

inline void write_manifest(const std::filesystem::path& p, const std::vector<ManifestEntry>& entries) {
  write_text_file(p, encode_manifest(entries));
}

inline std::vector<ManifestEntry> read_manifest(const std::filesystem::path& p) {
  return decode_manifest(read_text_file(p));
}

inline ManifestEntry manifest_entry(const UtteranceRecord& r) {
  ManifestEntry e;
  e.id = r.id;
  e.path = r.path;
  e.cls = r.cls;
  e.segments = r.segments;
  e.boundaries = r.annotation.boundaries;
  if (!r.source_id.empty() && r.source_id != r.id) e.source = r.source_id;
  return e;
}

/// Load the utterances of a manifest. ".sgft" paths load as imported
/// feature files, anything else as WAV.
inline std::vector<UtteranceRecord> load_manifest_records(const std::filesystem::path& manifest, int sample_rate) {
  const auto entries = read_manifest(manifest);
  const auto base = manifest.parent_path();
  std::vector<UtteranceRecord> out;
  out.reserve(entries.size());
  for (const auto& e : entries) {
    UtteranceRecord r;
    r.id = e.id;
    r.path = e.path;
    r.cls = e.cls;
    r.segments = e.segments;
    r.annotation.boundaries = e.boundaries;
    r.source_id = e.source.empty() ? e.id : e.source;
    std::filesystem::path p(e.path);
    if (p.is_relative()) p = base / p;
    std::int64_t length = 0;
    if (p.extension() == ".sgft") {
      auto fm = std::make_shared<FeatureMatrix>(read_features(p));
      length = static_cast<std::int64_t>(std::llround(fm->frames() * fm->frame_shift * sample_rate));
      r.features = std::move(fm);
    } else {
      auto w = std::make_shared<Waveform>(read_wav(p));
      require(w->sample_rate == sample_rate, ErrorKind::format,
              e.id + ": sample rate " + std::to_string(w->sample_rate) + " != " + std::to_string(sample_rate));
      length = static_cast<std::int64_t>(w->size());
      r.audio = std::move(w);
    }
    r.validate(length);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace spliceguard
