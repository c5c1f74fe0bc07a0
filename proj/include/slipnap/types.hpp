#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "slipnap/common.hpp"

namespace slipnap {

enum class Modality : std::uint8_t { Rgb = 0, Depth = 1, Audio = 2, ForceTorque = 3 };

constexpr int kNumModalities = 4;

inline const char* modality_name(Modality m) {
  switch (m) {
    case Modality::Rgb: return "rgb";
    case Modality::Depth: return "depth";
    case Modality::Audio: return "audio";
    case Modality::ForceTorque: return "ft";
  }
  return "?";
}

inline std::optional<Modality> modality_from_name(const std::string& s) {
  if (s == "rgb") return Modality::Rgb;
  if (s == "depth") return Modality::Depth;
  if (s == "audio" || s == "mic") return Modality::Audio;
  if (s == "ft" || s == "force_torque") return Modality::ForceTorque;
  return std::nullopt;
}

// Expected tensor rank per modality: Rgb HxWx3, Depth HxW, Audio 1-D, FT 1-D.
inline int modality_rank(Modality m) {
  switch (m) {
    case Modality::Rgb: return 3;
    case Modality::Depth: return 2;
    default: return 1;
  }
}

enum class Condition : std::uint8_t { Standing = 0, Moving = 1, Vad = 2 };

inline const char* condition_name(Condition c) {
  switch (c) {
    case Condition::Standing: return "standing";
    case Condition::Moving: return "moving";
    case Condition::Vad: return "vad";
  }
  return "?";
}

inline std::optional<Condition> condition_from_name(const std::string& s) {
  if (s == "standing") return Condition::Standing;
  if (s == "moving") return Condition::Moving;
  if (s == "vad") return Condition::Vad;
  return std::nullopt;
}

enum class Label : std::uint8_t { Normal = 0, Abnormal = 1 };

// One timestamped reading from one modality.
struct SensorFrame {
  Modality modality = Modality::Rgb;
  double timestamp = 0.0;  // seconds, episode-relative
  std::vector<std::uint32_t> shape;
  std::vector<double> payload;  // flat, row-major

  std::size_t expected_size() const {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }

  void validate() const {
    if (static_cast<int>(shape.size()) != modality_rank(modality))
      throw DataError(std::string("frame shape rank does not match modality ") + modality_name(modality));
    if (payload.size() != expected_size())
      throw DataError("frame payload length does not match shape");
  }
};

// One episode's worth of per-modality frame sequences.
struct StreamSet {
  std::string episode_id;
  Condition condition = Condition::Standing;
  std::optional<double> drop_time;  // seconds; absent -> no slip event
  std::vector<SensorFrame> streams[kNumModalities];

  const std::vector<SensorFrame>& stream(Modality m) const {
    return streams[static_cast<int>(m)];
  }
  std::vector<SensorFrame>& stream(Modality m) { return streams[static_cast<int>(m)]; }

  void validate() const {
    for (int m = 0; m < kNumModalities; ++m) {
      const auto& seq = streams[m];
      if (seq.empty())
        throw DataError(std::string("missing modality stream: ") +
                        modality_name(static_cast<Modality>(m)));
      double prev = -1e300;
      for (const auto& f : seq) {
        f.validate();
        if (f.timestamp <= prev)
          throw DataError(std::string("non-monotone timestamps in stream ") +
                          modality_name(static_cast<Modality>(m)));
        prev = f.timestamp;
      }
    }
    if (drop_time) {
      double lo = 1e300, hi = -1e300;
      for (int m = 0; m < kNumModalities; ++m) {
        lo = std::min(lo, streams[m].front().timestamp);
        hi = std::max(hi, streams[m].back().timestamp);
      }
      if (*drop_time < lo || *drop_time > hi)
        throw DataError("drop_time lies outside the covered time span");
    }
  }
};

// One 10 Hz tick of aligned per-modality data. Until normalization runs the
// tensors hold raw sensor units; afterwards image/ft/mfcc entries are in [0,1].
struct SyncedSample {
  double tick_time = 0.0;
  Eigen::VectorXd rgb;    // H*W*3
  Eigen::VectorXd depth;  // H*W
  Eigen::VectorXd audio;  // raw PCM chunk (pre-MFCC)
  Eigen::VectorXd mfcc;   // n_mfcc, filled by the dsp stage
  Eigen::VectorXd ft;     // 6
  Label label = Label::Normal;
};

struct FusedVector {
  Eigen::VectorXd values;
  double tick_time = 0.0;
  Label label = Label::Normal;
};

struct ScoredSample {
  double tick_time = 0.0;
  double score = 0.0;
  Label label = Label::Normal;
  std::optional<Label> predicted;
};

}  // namespace slipnap
