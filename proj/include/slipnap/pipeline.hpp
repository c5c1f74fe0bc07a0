#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "slipnap/autoencoder.hpp"
#include "slipnap/bundle.hpp"
#include "slipnap/config.hpp"
#include "slipnap/dsp.hpp"
#include "slipnap/fusion.hpp"
#include "slipnap/nap.hpp"
#include "slipnap/streamsync.hpp"
#include "slipnap/types.hpp"

namespace slipnap {

// Sync + label + MFCC for one episode; samples stay in raw sensor units.
inline std::vector<SyncedSample> prepare_samples(const StreamSet& streams,
                                                 const PipelineConfig& cfg,
                                                 const MfccExtractor& mfcc) {
  auto samples = synchronize(streams, cfg.sync);
  samples = label_ticks(std::move(samples), streams.drop_time);
  for (auto& s : samples) s.mfcc = mfcc.extract(s.audio, s.tick_time).coefficients;
  return samples;
}

struct TickMeta {
  double tick_time = 0.0;
  Label label = Label::Normal;
  Condition condition = Condition::Standing;
  std::string object;
  std::string episode_id;
};

struct FusedDataset {
  Eigen::MatrixXd x;  // fused dim x n_ticks
  std::vector<TickMeta> meta;
};

struct EpisodeRecord {
  StreamSet streams;
  Condition condition = Condition::Standing;
  std::string object;
};

// Callback-driven episode iteration so callers never hold a whole split in
// memory: source(fn) invokes fn once per episode.
using EpisodeSource = std::function<void(const std::function<void(const EpisodeRecord&)>&)>;

// First pass over the training split: per-channel ft/mfcc extrema.
inline NormRanges fit_norm_ranges(const EpisodeSource& source, const PipelineConfig& cfg,
                                  const MfccExtractor& mfcc) {
  NormRanges ranges;
  ranges.depth_hi = cfg.depth_max_mm;
  bool first = true;
  long n_episodes = 0;
  source([&](const EpisodeRecord& ep) {
    ++n_episodes;
    for (const auto& s : prepare_samples(ep.streams, cfg, mfcc)) {
      if (s.label != Label::Normal) continue;
      if (first) {
        ranges.ft_lo = s.ft;
        ranges.ft_hi = s.ft;
        ranges.mfcc_lo = s.mfcc;
        ranges.mfcc_hi = s.mfcc;
        first = false;
      } else {
        ranges.ft_lo = ranges.ft_lo.cwiseMin(s.ft);
        ranges.ft_hi = ranges.ft_hi.cwiseMax(s.ft);
        ranges.mfcc_lo = ranges.mfcc_lo.cwiseMin(s.mfcc);
        ranges.mfcc_hi = ranges.mfcc_hi.cwiseMax(s.mfcc);
      }
    }
  });
  if (first) throw DataError("fit_norm_ranges: no normal training ticks");
  for (Eigen::Index i = 0; i < ranges.ft_lo.size(); ++i)
    if (!(ranges.ft_lo[i] < ranges.ft_hi[i])) { ranges.ft_lo[i] -= 0.5; ranges.ft_hi[i] += 0.5; }
  for (Eigen::Index i = 0; i < ranges.mfcc_lo.size(); ++i)
    if (!(ranges.mfcc_lo[i] < ranges.mfcc_hi[i])) { ranges.mfcc_lo[i] -= 0.5; ranges.mfcc_hi[i] += 0.5; }
  (void)n_episodes;
  return ranges;
}

// Second pass: normalize, fuse, collect tick metadata.
inline FusedDataset build_fused(const EpisodeSource& source, const PipelineConfig& cfg,
                                const MfccExtractor& mfcc, const NormRanges& ranges,
                                const FusionOperator& op, bool only_normal) {
  std::vector<Eigen::VectorXd> cols;
  FusedDataset out;
  source([&](const EpisodeRecord& ep) {
    for (auto& s : prepare_samples(ep.streams, cfg, mfcc)) {
      if (only_normal && s.label != Label::Normal) continue;
      ranges.apply(s);
      FusedVector f = op.fuse(s);
      cols.push_back(std::move(f.values));
      out.meta.push_back({s.tick_time, s.label, ep.condition, ep.object, ep.streams.episode_id});
    }
  });
  if (cols.empty()) throw DataError("build_fused: no ticks produced");
  out.x.resize(cols.front().size(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) out.x.col(static_cast<Eigen::Index>(i)) = cols[i];
  return out;
}

// Column range of one modality inside the all-modality fused vector.
inline std::pair<Eigen::Index, Eigen::Index> fused_segment(const FusionSpec& full, Modality m) {
  Eigen::Index off = 0;
  for (int i = 0; i < kNumModalities; ++i) {
    auto mi = static_cast<Modality>(i);
    if (!full.enabled[static_cast<std::size_t>(i)]) continue;
    Eigen::Index len = full.embedding_dim(mi);
    if (mi == m) return {off, len};
    off += len;
  }
  throw ConfigError(std::string("modality not present in fusion spec: ") + modality_name(m));
}

// Rows of the matrix X (fused dim x n) restricted to a modality mask, in the
// fixed concatenation order.
inline Eigen::MatrixXd mask_rows(const Eigen::MatrixXd& x, const FusionSpec& full,
                                 const std::array<bool, kNumModalities>& mask) {
  Eigen::Index total = 0;
  for (int m = 0; m < kNumModalities; ++m)
    if (mask[static_cast<std::size_t>(m)]) total += fused_segment(full, static_cast<Modality>(m)).second;
  if (total == 0) throw ConfigError("modality mask excludes all modalities");
  Eigen::MatrixXd out(total, x.cols());
  Eigen::Index off = 0;
  for (int m = 0; m < kNumModalities; ++m) {
    if (!mask[static_cast<std::size_t>(m)]) continue;
    auto [seg_off, seg_len] = fused_segment(full, static_cast<Modality>(m));
    out.middleRows(off, seg_len) = x.middleRows(seg_off, seg_len);
    off += seg_len;
  }
  return out;
}

// Pathway-error rows for NAP; optionally prepends the input-space residual
// x - x_hat as an extra block.
inline Eigen::MatrixXd nap_input_rows(const AeModel& ae, const Eigen::MatrixXd& x,
                                      bool include_input_block) {
  if (!include_input_block) return ae.pathway_batch(x);
  auto fwd = ae.forward_batch(x);
  Eigen::MatrixXd h(x.cols(), ae.arch().pathway_dim());
  Eigen::Index off = 0;
  for (const auto& a : fwd.hidden) {
    h.middleCols(off, a.rows()) = a.transpose();
    off += a.rows();
  }
  Eigen::MatrixXd h_hat = ae.encode_pathway(fwd.x_hat);
  Eigen::MatrixXd d(x.cols(), x.rows() + ae.arch().pathway_dim());
  d.leftCols(x.rows()) = (x - fwd.x_hat).transpose();
  d.rightCols(ae.arch().pathway_dim()) = h - h_hat;
  return d;
}

struct TrainLog {
  std::vector<double> train_loss, val_loss;
  std::vector<double> val_scores;  // NAP scores over the validation split
  int best_epoch = -1;
};

// End-to-end fit over pre-fused matrices: autoencoder, NAP whitening and the
// validation-quantile threshold.
inline ModelBundle fit_detector(const PipelineConfig& cfg, const Eigen::MatrixXd& train_x,
                                const Eigen::MatrixXd& val_x, const FusionSpec& fusion_spec,
                                const NormRanges& ranges, const FusionOperator& op,
                                TrainLog* log = nullptr) {
  ModelBundle bundle;
  bundle.config = cfg;
  bundle.norm = ranges;
  bundle.fusion_spec = fusion_spec;
  for (int m = 0; m < kNumModalities; ++m)
    bundle.fusion_weights[m] = op.weights(static_cast<Modality>(m));

  AeArchitecture arch = cfg.ae_architecture(static_cast<int>(train_x.rows()));
  auto result = train_autoencoder(train_x, val_x, arch, cfg.train,
                                  derive_seed(cfg.seed, "ae/init"));
  bundle.ae = std::move(result.model);

  Eigen::MatrixXd d_rows = nap_input_rows(bundle.ae, train_x, cfg.nap_include_input_block);
  bundle.nap = nap_fit(d_rows, cfg.nap_covariance_convention);

  Eigen::MatrixXd d_val = nap_input_rows(bundle.ae, val_x, cfg.nap_include_input_block);
  Eigen::VectorXd val_scores = bundle.nap.score_rows(d_val);
  bundle.nap.threshold =
      fit_threshold(std::vector<double>(val_scores.data(), val_scores.data() + val_scores.size()),
                    cfg.nap_quantile);

  std::string cfg_text = config_to_text(cfg);
  bundle.config_hash = fnv1a(cfg_text.data(), cfg_text.size());
  if (log) {
    log->train_loss = result.train_loss;
    log->val_loss = result.val_loss;
    log->best_epoch = result.best_epoch;
    log->val_scores.assign(val_scores.data(), val_scores.data() + val_scores.size());
  }
  return bundle;
}

inline Eigen::VectorXd score_fused(const ModelBundle& bundle, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd d = nap_input_rows(bundle.ae, x, bundle.config.nap_include_input_block);
  return bundle.nap.score_rows(d);
}

// --- streaming scorer ---

struct StreamTickResult {
  double tick_time = 0.0;
  double score = 0.0;
  Label predicted = Label::Normal;
};

struct StageTimings {
  std::vector<double> fusion_ms, autoencoder_ms, nap_ms, total_ms;

  static double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    std::size_t mid = v.size() / 2;
    return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
  }
};

// Incremental synchronizer + scorer. Feeding the frames of an episode in any
// modality interleaving (monotone per modality) produces exactly the ticks and
// scores of the batch path.
class StreamScorer {
 public:
  explicit StreamScorer(const ModelBundle& bundle)
      : bundle_(bundle), mfcc_(bundle.config.mfcc), op_(restore_fusion(bundle)) {
    period_ = 1.0 / bundle.config.sync.grid_hz;
    tol_ = bundle.config.sync.tolerance_periods * period_;
    next_tick_ = 1;
  }

  // Returns any ticks completed by this frame.
  std::vector<StreamTickResult> feed(const SensorFrame& frame) {
    frame.validate();
    auto& st = lanes_[static_cast<int>(frame.modality)];
    if (st.last_ts && frame.timestamp <= *st.last_ts)
      throw DataError(std::string("non-monotone timestamps in stream ") +
                      modality_name(frame.modality));
    if (!st.first_ts) st.first_ts = frame.timestamp;
    st.last_ts = frame.timestamp;
    st.pending.push_back(detail::payload_vector(frame));
    st.pending_ts.push_back(frame.timestamp);
    return drain(false);
  }

  std::vector<StreamTickResult> finish() { return drain(true); }

  const StageTimings& timings() const { return timings_; }

 private:
  struct Lane {
    std::optional<double> first_ts, last_ts;
    std::deque<Eigen::VectorXd> pending;
    std::deque<double> pending_ts;
    std::optional<double> before_ts;
    Eigen::VectorXd before;      // latest frame at or before the current tick
    bool have_held = false;      // value emitted for the previous tick
    Eigen::VectorXd held;
  };

  std::vector<StreamTickResult> drain(bool at_end) {
    std::vector<StreamTickResult> out;
    const double eps = 1e-9;
    for (;;) {
      double t = static_cast<double>(next_tick_) * period_;
      // all lanes must have started
      bool started = true;
      double span_lo = -1e300;
      for (const auto& l : lanes_) {
        if (!l.first_ts) { started = false; break; }
        span_lo = std::max(span_lo, *l.first_ts);
      }
      if (!started) break;
      // the nearest frame for tick t is determined once a frame at or past t
      // exists in every lane (timestamps are monotone); at end-of-stream the
      // batch span cap min(last_ts) applies instead
      bool ready = true;
      for (const auto& l : lanes_) {
        if (!(*l.last_ts >= t - eps)) { ready = false; break; }
      }
      if (!ready) {
        if (!at_end) break;
        double span_hi = 1e300;
        for (const auto& l : lanes_) span_hi = std::min(span_hi, *l.last_ts);
        if (t > span_hi + eps) break;
      }
      if (t < span_lo - eps) {  // tick precedes the span intersection
        advance_lanes(t);
        ++next_tick_;
        continue;
      }
      advance_lanes(t);
      SyncedSample s;
      s.tick_time = t;
      bool complete = true;
      for (int m = 0; m < kNumModalities && complete; ++m) {
        auto& l = lanes_[m];
        // nearest of the latest frame <= t and the first frame > t, earlier on tie
        std::optional<double> best_ts;
        const Eigen::VectorXd* best = nullptr;
        if (l.before_ts) {
          best_ts = *l.before_ts;
          best = &l.before;
        }
        if (!l.pending_ts.empty()) {
          double dist_after = l.pending_ts.front() - t;
          if (!best_ts || dist_after < t - *best_ts) {
            best_ts = l.pending_ts.front();
            best = &l.pending.front();
          }
        }
        Eigen::VectorXd value;
        if (best_ts && std::abs(*best_ts - t) <= tol_ + eps) {
          value = *best;
        } else if (bundle_.config.sync.hold_last && l.have_held) {
          value = l.held;
        } else {
          complete = false;
          break;
        }
        l.held = value;
        l.have_held = true;
        switch (static_cast<Modality>(m)) {
          case Modality::Rgb: s.rgb = std::move(value); break;
          case Modality::Depth: s.depth = std::move(value); break;
          case Modality::Audio: s.audio = std::move(value); break;
          case Modality::ForceTorque: s.ft = std::move(value); break;
        }
      }
      ++next_tick_;
      if (!complete) continue;
      out.push_back(score_tick(s));
    }
    return out;
  }

  void advance_lanes(double t) {
    const double eps = 1e-9;
    for (auto& l : lanes_) {
      while (!l.pending_ts.empty() && l.pending_ts.front() <= t + eps) {
        l.before_ts = l.pending_ts.front();
        l.before = std::move(l.pending.front());
        l.pending.pop_front();
        l.pending_ts.pop_front();
      }
    }
  }

  StreamTickResult score_tick(SyncedSample& s) {
    using clock = std::chrono::steady_clock;
    auto t0 = clock::now();
    s.mfcc = mfcc_.extract(s.audio, s.tick_time).coefficients;
    bundle_.norm.apply(s);
    FusedVector f = op_.fuse(s);
    auto t1 = clock::now();
    Eigen::MatrixXd x = f.values;
    Eigen::MatrixXd d = nap_input_rows(bundle_.ae, x, bundle_.config.nap_include_input_block);
    auto t2 = clock::now();
    double score = bundle_.nap.score(d.row(0).transpose());
    auto t3 = clock::now();
    auto ms = [](auto a, auto b) {
      return std::chrono::duration<double, std::milli>(b - a).count();
    };
    timings_.fusion_ms.push_back(ms(t0, t1));
    timings_.autoencoder_ms.push_back(ms(t1, t2));
    timings_.nap_ms.push_back(ms(t2, t3));
    timings_.total_ms.push_back(ms(t0, t3));
    StreamTickResult r;
    r.tick_time = s.tick_time;
    r.score = score;
    r.predicted = bundle_.nap.threshold ? bundle_.nap.classify(score) : Label::Normal;
    return r;
  }

  ModelBundle bundle_;
  MfccExtractor mfcc_;
  FusionOperator op_;
  double period_ = 0.1, tol_ = 0.05;
  long next_tick_ = 1;
  Lane lanes_[kNumModalities];
  StageTimings timings_;
};

}  // namespace slipnap
