#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "slipnap/common.hpp"
#include "slipnap/simulator.hpp"
#include "slipnap/types.hpp"

namespace slipnap {

// Per-modality record file: header {magic "SLIP", version u16, modality u8,
// ndims u8, dims u32 each, frame count u64}, then per frame a f64 timestamp
// followed by the f64 payload. Little-endian throughout.
inline constexpr std::uint16_t kEpisodeFormatVersion = 1;

inline void write_stream_file(const std::filesystem::path& path,
                              const std::vector<SensorFrame>& frames) {
  if (frames.empty()) throw DataError("write_stream_file: empty stream");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open for writing: " + path.string());
  os.write("SLIP", 4);
  write_pod<std::uint16_t>(os, kEpisodeFormatVersion);
  write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(frames.front().modality));
  const auto& shape = frames.front().shape;
  write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(shape.size()));
  for (auto d : shape) write_pod<std::uint32_t>(os, d);
  write_pod<std::uint64_t>(os, frames.size());
  for (const auto& f : frames) {
    if (f.shape != shape) throw DataError("write_stream_file: varying frame shapes in one stream");
    write_pod<double>(os, f.timestamp);
    write_f64_array(os, f.payload.data(), f.payload.size());
  }
  if (!os) throw DataError("write failed: " + path.string());
}

inline std::vector<SensorFrame> read_stream_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "SLIP") throw DataError("bad magic in " + path.string());
  auto version = read_pod<std::uint16_t>(is);
  if (version != kEpisodeFormatVersion)
    throw DataError("unsupported episode format version in " + path.string());
  auto modality = static_cast<Modality>(read_pod<std::uint8_t>(is));
  auto ndims = read_pod<std::uint8_t>(is);
  std::vector<std::uint32_t> shape(ndims);
  std::size_t n_elem = 1;
  for (auto& d : shape) {
    d = read_pod<std::uint32_t>(is);
    n_elem *= d;
  }
  auto count = read_pod<std::uint64_t>(is);
  std::vector<SensorFrame> frames;
  frames.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    SensorFrame f;
    f.modality = modality;
    f.shape = shape;
    f.timestamp = read_pod<double>(is);
    f.payload.resize(n_elem);
    read_f64_array(is, f.payload.data(), n_elem);
    frames.push_back(std::move(f));
  }
  return frames;
}

struct EpisodeMeta {
  std::string episode_id;
  Condition condition = Condition::Standing;
  std::optional<double> drop_time;
  std::string object;
  std::string pattern;
  std::uint64_t seed = 0;
};

inline void write_episode(const std::filesystem::path& dir, const StreamSet& streams,
                          const EpisodeMeta& meta) {
  std::filesystem::create_directories(dir);
  for (int m = 0; m < kNumModalities; ++m)
    write_stream_file(dir / (std::string(modality_name(static_cast<Modality>(m))) + ".slip"),
                      streams.streams[m]);
  std::ofstream os(dir / "manifest.txt");
  if (!os) throw DataError("cannot write episode manifest in " + dir.string());
  os << "episode_id: " << meta.episode_id << "\n";
  os << "condition: " << condition_name(meta.condition) << "\n";
  if (meta.drop_time) os << "drop_time: " << *meta.drop_time << "\n";
  os << "object: " << meta.object << "\n";
  os << "pattern: " << meta.pattern << "\n";
  os << "seed: " << meta.seed << "\n";
}

inline std::pair<StreamSet, EpisodeMeta> read_episode(const std::filesystem::path& dir) {
  StreamSet ss;
  EpisodeMeta meta;
  std::ifstream is(dir / "manifest.txt");
  if (!is) throw DataError("missing episode manifest in " + dir.string());
  std::string line;
  while (std::getline(is, line)) {
    auto colon = line.find(": ");
    if (colon == std::string::npos) continue;
    std::string key = line.substr(0, colon), val = line.substr(colon + 2);
    if (key == "episode_id") meta.episode_id = val;
    else if (key == "condition") {
      auto c = condition_from_name(val);
      if (!c) throw DataError("unknown condition in manifest: " + val);
      meta.condition = *c;
    } else if (key == "drop_time") meta.drop_time = std::stod(val);
    else if (key == "object") meta.object = val;
    else if (key == "pattern") meta.pattern = val;
    else if (key == "seed") meta.seed = std::stoull(val);
  }
  ss.episode_id = meta.episode_id;
  ss.condition = meta.condition;
  ss.drop_time = meta.drop_time;
  for (int m = 0; m < kNumModalities; ++m)
    ss.streams[m] = read_stream_file(
        dir / (std::string(modality_name(static_cast<Modality>(m))) + ".slip"));
  return {std::move(ss), std::move(meta)};
}

// --- NDJSON frame records for streaming ingestion ---

inline std::string frame_to_ndjson(const SensorFrame& f) {
  nlohmann::json j;
  j["modality"] = modality_name(f.modality);
  j["timestamp"] = f.timestamp;
  j["shape"] = f.shape;
  j["payload"] = f.payload;
  return j.dump();
}

inline SensorFrame frame_from_ndjson(const std::string& line) {
  nlohmann::json j = nlohmann::json::parse(line);
  SensorFrame f;
  auto m = modality_from_name(j.at("modality").get<std::string>());
  if (!m) throw DataError("unknown modality in frame record");
  f.modality = *m;
  f.timestamp = j.at("timestamp").get<double>();
  f.shape = j.at("shape").get<std::vector<std::uint32_t>>();
  f.payload = j.at("payload").get<std::vector<double>>();
  f.validate();
  return f;
}

// --- dataset manifest: one tab-separated line per episode ---

inline void write_dataset_manifest(const std::filesystem::path& path,
                                   const std::vector<ManifestEntry>& entries) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write manifest: " + path.string());
  for (const auto& e : entries)
    os << e.path << '\t' << e.split << '\t' << condition_name(e.condition) << '\t' << e.object
       << '\t' << pattern_name(e.pattern) << '\t' << e.seed << '\n';
}

inline std::vector<ManifestEntry> read_dataset_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open manifest: " + path.string());
  std::vector<ManifestEntry> entries;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    ManifestEntry e;
    std::string cond, pat, seed;
    if (!std::getline(ss, e.path, '\t') || !std::getline(ss, e.split, '\t') ||
        !std::getline(ss, cond, '\t') || !std::getline(ss, e.object, '\t') ||
        !std::getline(ss, pat, '\t') || !std::getline(ss, seed, '\t'))
      throw DataError("malformed manifest line: " + line);
    auto c = condition_from_name(cond);
    auto p = pattern_from_name(pat);
    if (!c || !p) throw DataError("bad condition/pattern in manifest line: " + line);
    e.condition = *c;
    e.pattern = *p;
    e.seed = std::stoull(seed);
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace slipnap
