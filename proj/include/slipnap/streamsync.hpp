#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "slipnap/types.hpp"

namespace slipnap {

// Clamp-then-scale min-max normalization onto [0,1].
inline double minmax_normalize(double value, double lo, double hi) {
  if (!(lo < hi)) throw ConfigError("minmax_normalize: degenerate range (lo >= hi)");
  double v = std::clamp(value, lo, hi);
  return (v - lo) / (hi - lo);
}

struct SyncConfig {
  double grid_hz = 10.0;
  // A frame farther than this many grid periods from the tick is considered
  // stale and the previous tick's value is held instead.
  double tolerance_periods = 0.5;
  bool hold_last = true;
};

namespace detail {

// Index of the frame whose timestamp is nearest to t, ties toward the earlier
// frame. Frames are sorted by timestamp.
inline std::size_t nearest_frame(const std::vector<SensorFrame>& frames, double t) {
  auto it = std::lower_bound(frames.begin(), frames.end(), t,
                             [](const SensorFrame& f, double v) { return f.timestamp < v; });
  if (it == frames.begin()) return 0;
  if (it == frames.end()) return frames.size() - 1;
  std::size_t hi = static_cast<std::size_t>(it - frames.begin());
  std::size_t lo = hi - 1;
  double dlo = t - frames[lo].timestamp;
  double dhi = frames[hi].timestamp - t;
  return (dlo <= dhi) ? lo : hi;  // tie -> earlier
}

inline Eigen::VectorXd payload_vector(const SensorFrame& f) {
  return Eigen::Map<const Eigen::VectorXd>(f.payload.data(),
                                           static_cast<Eigen::Index>(f.payload.size()));
}

}  // namespace detail

// Aligns all modality streams onto the common grid. Output samples hold raw
// payloads; normalization and MFCC extraction are separate stages.
inline std::vector<SyncedSample> synchronize(const StreamSet& streams,
                                             const SyncConfig& cfg = {}) {
  if (!(cfg.grid_hz > 0)) throw ConfigError("synchronize: grid_hz must be positive");
  streams.validate();

  const double period = 1.0 / cfg.grid_hz;
  const double tol = cfg.tolerance_periods * period;
  const double eps = 1e-9;

  // Intersection of the modality time spans.
  double span_lo = -1e300, span_hi = 1e300;
  for (int m = 0; m < kNumModalities; ++m) {
    span_lo = std::max(span_lo, streams.streams[m].front().timestamp);
    span_hi = std::min(span_hi, streams.streams[m].back().timestamp);
  }

  long k_first = static_cast<long>(std::ceil(span_lo / period - eps));
  long k_last = static_cast<long>(std::floor(span_hi / period + eps));
  if (k_first < 1) k_first = 1;

  std::vector<SyncedSample> out;
  bool have_prev[kNumModalities] = {false, false, false, false};
  Eigen::VectorXd prev[kNumModalities];

  for (long k = k_first; k <= k_last; ++k) {
    double t = static_cast<double>(k) * period;
    SyncedSample s;
    s.tick_time = t;
    bool complete = true;
    Eigen::VectorXd slot[kNumModalities];
    for (int m = 0; m < kNumModalities; ++m) {
      const auto& seq = streams.streams[m];
      std::size_t idx = detail::nearest_frame(seq, t);
      double dist = std::abs(seq[idx].timestamp - t);
      if (dist <= tol + eps) {
        slot[m] = detail::payload_vector(seq[idx]);
      } else if (cfg.hold_last && have_prev[m]) {
        slot[m] = prev[m];
      } else {
        complete = false;  // leading tick with no usable frame yet
        break;
      }
    }
    if (!complete) continue;
    for (int m = 0; m < kNumModalities; ++m) {
      prev[m] = slot[m];
      have_prev[m] = true;
    }
    s.rgb = std::move(slot[static_cast<int>(Modality::Rgb)]);
    s.depth = std::move(slot[static_cast<int>(Modality::Depth)]);
    s.audio = std::move(slot[static_cast<int>(Modality::Audio)]);
    s.ft = std::move(slot[static_cast<int>(Modality::ForceTorque)]);
    out.push_back(std::move(s));
  }
  return out;
}

// Labels ticks around the drop event and trims everything past the abnormal
// window. No drop time -> all ticks stay Normal.
inline std::vector<SyncedSample> label_ticks(std::vector<SyncedSample> samples,
                                             std::optional<double> drop_time,
                                             double window = 0.5) {
  if (!drop_time) {
    for (auto& s : samples) s.label = Label::Normal;
    return samples;
  }
  const double eps = 1e-9;
  std::vector<SyncedSample> out;
  out.reserve(samples.size());
  for (auto& s : samples) {
    if (s.tick_time <= *drop_time + eps) {
      s.label = Label::Normal;
      out.push_back(std::move(s));
    } else if (s.tick_time <= *drop_time + window + eps) {
      s.label = Label::Abnormal;
      out.push_back(std::move(s));
    }
    // ticks beyond drop + window are excluded
  }
  return out;
}

// Per-channel normalization ranges. Image ranges are fixed by the sensor
// encoding; ft and mfcc ranges are fitted on the training split and persisted.
struct NormRanges {
  double rgb_lo = 0.0, rgb_hi = 255.0;
  double depth_lo = 0.0, depth_hi = 4000.0;  // millimeters
  Eigen::VectorXd ft_lo, ft_hi;              // 6 each
  Eigen::VectorXd mfcc_lo, mfcc_hi;          // n_mfcc each

  bool fitted() const { return ft_lo.size() > 0 && mfcc_lo.size() > 0; }

  // Accumulates channel extrema over training samples (mfcc must be filled).
  void fit(const std::vector<SyncedSample>& samples) {
    if (samples.empty()) throw DataError("NormRanges::fit: no samples");
    ft_lo = samples.front().ft;
    ft_hi = samples.front().ft;
    mfcc_lo = samples.front().mfcc;
    mfcc_hi = samples.front().mfcc;
    for (const auto& s : samples) {
      ft_lo = ft_lo.cwiseMin(s.ft);
      ft_hi = ft_hi.cwiseMax(s.ft);
      mfcc_lo = mfcc_lo.cwiseMin(s.mfcc);
      mfcc_hi = mfcc_hi.cwiseMax(s.mfcc);
    }
    // Degenerate (constant) channels get a unit-width range around the value.
    for (Eigen::Index i = 0; i < ft_lo.size(); ++i)
      if (!(ft_lo[i] < ft_hi[i])) { ft_lo[i] -= 0.5; ft_hi[i] += 0.5; }
    for (Eigen::Index i = 0; i < mfcc_lo.size(); ++i)
      if (!(mfcc_lo[i] < mfcc_hi[i])) { mfcc_lo[i] -= 0.5; mfcc_hi[i] += 0.5; }
  }

  // Normalizes a sample in place. Out-of-range values clamp.
  void apply(SyncedSample& s) const {
    if (!fitted()) throw ConfigError("NormRanges::apply: ranges not fitted");
    for (Eigen::Index i = 0; i < s.rgb.size(); ++i)
      s.rgb[i] = minmax_normalize(s.rgb[i], rgb_lo, rgb_hi);
    for (Eigen::Index i = 0; i < s.depth.size(); ++i)
      s.depth[i] = minmax_normalize(s.depth[i], depth_lo, depth_hi);
    if (s.ft.size() != ft_lo.size()) throw DataError("ft channel count mismatch");
    for (Eigen::Index i = 0; i < s.ft.size(); ++i)
      s.ft[i] = minmax_normalize(s.ft[i], ft_lo[i], ft_hi[i]);
    if (s.mfcc.size() != mfcc_lo.size()) throw DataError("mfcc channel count mismatch");
    for (Eigen::Index i = 0; i < s.mfcc.size(); ++i)
      s.mfcc[i] = minmax_normalize(s.mfcc[i], mfcc_lo[i], mfcc_hi[i]);
  }
};

}  // namespace slipnap
