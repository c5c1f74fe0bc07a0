#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "slipnap/common.hpp"
#include "slipnap/types.hpp"

namespace slipnap {

enum class MovingPattern : std::uint8_t { Forward = 0, Backward = 1, Sideways = 2, Rotate = 3 };

inline const char* pattern_name(MovingPattern p) {
  switch (p) {
    case MovingPattern::Forward: return "forward";
    case MovingPattern::Backward: return "backward";
    case MovingPattern::Sideways: return "sideways";
    case MovingPattern::Rotate: return "rotate";
  }
  return "?";
}

inline std::optional<MovingPattern> pattern_from_name(const std::string& s) {
  if (s == "forward") return MovingPattern::Forward;
  if (s == "backward") return MovingPattern::Backward;
  if (s == "sideways") return MovingPattern::Sideways;
  if (s == "rotate") return MovingPattern::Rotate;
  return std::nullopt;
}

// Synthetic object presets: weight, on-image footprint, visual contrast and
// impact-sound gain of typical desk objects.
struct ObjectPreset {
  std::string name;
  double weight_g = 100.0;
  int blob_size = 8;        // pixels, square footprint
  double contrast = 0.5;    // visual contrast of the blob against background
  double sound_gain = 0.5;  // impact impulse amplitude
};

inline const std::array<ObjectPreset, 8>& object_presets() {
  static const std::array<ObjectPreset, 8> presets = {{
      {"cracker_box", 411.0, 12, 0.80, 0.70},
      {"sugar_box", 514.0, 10, 0.75, 0.65},
      {"tomato_can", 349.0, 8, 0.70, 0.80},
      {"mustard_bottle", 603.0, 9, 0.65, 0.60},
      {"potted_can", 370.0, 8, 0.60, 0.85},
      {"banana", 66.0, 7, 0.55, 0.30},
      {"mug", 118.0, 7, 0.50, 0.90},
      {"baseball", 148.0, 6, 0.45, 0.75},
  }};
  return presets;
}

inline const ObjectPreset& object_preset(const std::string& name) {
  for (const auto& p : object_presets())
    if (p.name == name) return p;
  throw ConfigError("unknown object preset: " + name);
}

struct ScenarioConfig {
  std::uint64_t seed = 0;
  ObjectPreset object = object_presets()[0];
  Condition condition = Condition::Standing;
  MovingPattern pattern = MovingPattern::Forward;
  double length_s = 5.5;
  double drop_s = 5.0;
  double image_hz = 10.0;
  double audio_hz = 16000.0;
  double ft_hz = 100.0;
  int image_h = 32, image_w = 32;
  // channel models
  double ft_baseline_n = 20.0;      // gripper preload on the vertical axis
  double ft_decay_s = 0.05;         // force decay constant after release
  double ft_noise_n = 0.02;         // per-sample sensor noise (all conditions)
  double motion_force_n = 2.0;      // oscillation amplitude while moving
  double motion_hz = 1.7;
  double audio_noise = 0.002;       // background floor
  double impulse_decay_s = 0.12;
  double scrape_noise = 0.003;      // broadband sliding noise while the object falls
  double fall_delay_s = 0.3;        // release-to-impact delay
  double vad_audio_noise = 0.12;    // continuous speech-band disturbance
  double vad_flicker = 0.5;         // monitor-region flicker amplitude (Vad)
  double image_noise = 0.5;         // per-pixel sensor noise, 0..255 scale
  double depth_background_mm = 2000.0;
  double depth_object_mm = 500.0;

  void validate() const {
    if (!(drop_s + 0.5 <= length_s + 1e-9)) throw ConfigError("scenario: drop + 0.5 s must fit in episode");
    if (!(object.weight_g > 0)) throw ConfigError("scenario: object weight must be positive");
  }
};

struct EpisodeBundle {
  StreamSet streams;
  double drop_time = 0.0;
  ScenarioConfig config;
};

namespace detail {

// Gaussian draw from the documented PRNG (Box-Muller, one value per call pair).
class GaussStream {
 public:
  explicit GaussStream(std::uint64_t seed) : rng_(seed) {}
  double operator()() {
    if (have_) {
      have_ = false;
      return cached_;
    }
    double u1 = u64_to_unit_double(rng_());
    double u2 = u64_to_unit_double(rng_());
    if (u1 < 1e-300) u1 = 1e-300;
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * std::numbers::pi * u2;
    cached_ = r * std::sin(a);
    have_ = true;
    return r * std::cos(a);
  }
  double uniform() { return u64_to_unit_double(rng_()); }

 private:
  std::mt19937_64 rng_;
  double cached_ = 0.0;
  bool have_ = false;
};

}  // namespace detail

// One full protocol run: grasp (loaded), optional motion, release at drop_s,
// record up to length_s. Deterministic per (config, seed).
inline EpisodeBundle generate_episode(const ScenarioConfig& cfg) {
  cfg.validate();
  EpisodeBundle ep;
  ep.config = cfg;
  ep.drop_time = cfg.drop_s;
  ep.streams.condition = cfg.condition;
  ep.streams.drop_time = cfg.drop_s;
  ep.streams.episode_id = cfg.object.name + "_" + pattern_name(cfg.pattern) + "_" +
                          condition_name(cfg.condition) + "_" + std::to_string(cfg.seed);

  const bool moving = cfg.condition != Condition::Standing;
  const bool vad = cfg.condition == Condition::Vad;
  const double weight_n = cfg.object.weight_g * 9.81 / 1000.0;

  detail::GaussStream ft_rng(derive_seed(cfg.seed, "sim/ft"));
  detail::GaussStream audio_rng(derive_seed(cfg.seed, "sim/audio"));
  detail::GaussStream image_rng(derive_seed(cfg.seed, "sim/image"));
  detail::GaussStream phase_rng(derive_seed(cfg.seed, "sim/phase"));
  const double motion_phase = phase_rng.uniform() * 2.0 * std::numbers::pi;
  const double wander_phase = phase_rng.uniform() * 2.0 * std::numbers::pi;
  const double ambient_phase = phase_rng.uniform() * 2.0 * std::numbers::pi;
  const double speech_phase = phase_rng.uniform() * 2.0 * std::numbers::pi;
  const double pattern_dir = (cfg.pattern == MovingPattern::Backward) ? -1.0 : 1.0;
  const double motion_axis_mix =
      (cfg.pattern == MovingPattern::Sideways || cfg.pattern == MovingPattern::Rotate) ? 0.7 : 0.3;

  // --- force-torque, 100 Hz ---
  {
    auto& seq = ep.streams.stream(Modality::ForceTorque);
    const long n = static_cast<long>(std::lround(cfg.length_s * cfg.ft_hz));
    for (long i = 1; i <= n; ++i) {
      double t = static_cast<double>(i) / cfg.ft_hz;
      SensorFrame f;
      f.modality = Modality::ForceTorque;
      f.timestamp = t;
      f.shape = {6};
      f.payload.resize(6);
      double load = (t <= cfg.drop_s)
                        ? weight_n
                        : weight_n * std::exp(-(t - cfg.drop_s) / cfg.ft_decay_s);
      double osc = moving ? cfg.motion_force_n *
                                std::sin(2.0 * std::numbers::pi * cfg.motion_hz * t + motion_phase)
                          : 0.0;
      // slow inertial wander while moving; its timescale overlaps the release
      // decay, so motion makes the force cue genuinely harder to read
      double wander =
          moving ? 0.15 * cfg.motion_force_n *
                       std::sin(2.0 * std::numbers::pi * 0.23 * t + wander_phase)
                 : 0.0;
      f.payload[0] = pattern_dir * osc * motion_axis_mix + cfg.ft_noise_n * ft_rng();
      f.payload[1] = osc * (1.0 - motion_axis_mix) + cfg.ft_noise_n * ft_rng();
      f.payload[2] = cfg.ft_baseline_n + load + osc + wander + cfg.ft_noise_n * ft_rng();
      f.payload[3] = 0.05 * osc + cfg.ft_noise_n * ft_rng();
      f.payload[4] = -0.05 * osc + cfg.ft_noise_n * ft_rng();
      f.payload[5] = load * 0.02 + cfg.ft_noise_n * ft_rng();
      seq.push_back(std::move(f));
    }
  }

  // --- audio, 16 kHz PCM emitted as one 0.1 s chunk per image tick ---
  {
    auto& seq = ep.streams.stream(Modality::Audio);
    const long ticks = static_cast<long>(std::lround(cfg.length_s * cfg.image_hz));
    const long chunk = static_cast<long>(std::lround(cfg.audio_hz / cfg.image_hz));
    const double impact_t = cfg.drop_s + cfg.fall_delay_s;
    for (long k = 1; k <= ticks; ++k) {
      double t_end = static_cast<double>(k) / cfg.image_hz;
      SensorFrame f;
      f.modality = Modality::Audio;
      f.timestamp = t_end;
      f.shape = {static_cast<std::uint32_t>(chunk)};
      f.payload.resize(static_cast<std::size_t>(chunk));
      for (long i = 0; i < chunk; ++i) {
        double t = t_end - static_cast<double>(chunk - i) / cfg.audio_hz;
        // the ambient floor drifts slowly, so a faint scrape during the fall
        // is not trivially separable from room-noise variation
        double amp = cfg.audio_noise *
                     (1.0 + 0.6 * std::sin(2.0 * std::numbers::pi * 0.23 * t + ambient_phase) +
                      0.3 * std::sin(2.0 * std::numbers::pi * 0.057 * t + motion_phase));
        amp = std::max(amp, 0.2 * cfg.audio_noise);
        if (t > cfg.drop_s && t < impact_t) amp += cfg.scrape_noise;
        double v = amp * audio_rng();
        if (vad) {
          // speech-band disturbance: amplitude-modulated tones arriving in
          // bursts, so normal ticks span a wide range of audio energies
          double burst =
              0.2 + 0.8 * std::abs(std::sin(2.0 * std::numbers::pi * 0.11 * t + speech_phase));
          v += burst * cfg.vad_audio_noise *
               (std::sin(2.0 * std::numbers::pi * 310.0 * t + motion_phase) *
                    (0.6 + 0.4 * std::sin(2.0 * std::numbers::pi * 2.3 * t)) +
                0.5 * std::sin(2.0 * std::numbers::pi * 720.0 * t));
        }
        if (t >= impact_t)
          v += cfg.object.sound_gain * std::exp(-(t - impact_t) / cfg.impulse_decay_s) *
               std::sin(2.0 * std::numbers::pi * 1200.0 * (t - impact_t));
        f.payload[static_cast<std::size_t>(i)] = std::clamp(v, -1.0, 1.0);
      }
      seq.push_back(std::move(f));
    }
  }

  // --- rgb + depth, 10 Hz ---
  {
    auto& rgb_seq = ep.streams.stream(Modality::Rgb);
    auto& depth_seq = ep.streams.stream(Modality::Depth);
    const long ticks = static_cast<long>(std::lround(cfg.length_s * cfg.image_hz));
    const int H = cfg.image_h, W = cfg.image_w;
    const int bs = std::min(cfg.object.blob_size, std::min(H, W));
    const int by_held = H - bs - 6, bx0 = (W - bs) / 2;  // gripper region, bottom center
    const int fall_px = H - bs - 2 - by_held;            // rest position on the table
    for (long k = 1; k <= ticks; ++k) {
      double t = static_cast<double>(k) / cfg.image_hz;
      bool held = t <= cfg.drop_s;
      // the object stays in frame: it slides down over the fall and rests on
      // the table, so vision sees a gradual positional change, not a vanishing
      int dy = 0;
      if (!held) {
        double frac = std::min(1.0, (t - cfg.drop_s) / cfg.fall_delay_s);
        dy = static_cast<int>(std::lround(frac * fall_px));
      }
      // gripper jitter in all phases keeps early-fall frames ambiguous; the
      // arm shakes harder while the base is moving
      const int jitter_amp = moving ? 3 : 1;
      int jitter =
          static_cast<int>(std::lround(image_rng.uniform() * 2.0 * jitter_amp)) - jitter_amp;
      const int by0 = by_held + dy + jitter;
      int shift = 0;
      if (moving) {
        double speed = (cfg.pattern == MovingPattern::Rotate) ? 3.0 : 2.0;
        shift = static_cast<int>(std::lround(pattern_dir * speed * t));
      }
      SensorFrame rgb;
      rgb.modality = Modality::Rgb;
      rgb.timestamp = t;
      rgb.shape = {static_cast<std::uint32_t>(H), static_cast<std::uint32_t>(W), 3};
      rgb.payload.resize(static_cast<std::size_t>(H) * W * 3);
      SensorFrame dep;
      dep.modality = Modality::Depth;
      dep.timestamp = t;
      dep.shape = {static_cast<std::uint32_t>(H), static_cast<std::uint32_t>(W)};
      dep.payload.resize(static_cast<std::size_t>(H) * W);
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
          // deterministic textured background, translated while moving
          int xb = ((x + shift) % W + W) % W;
          double bg_r = 60.0 + 40.0 * std::sin(0.7 * xb + 0.3 * y);
          double bg_g = 80.0 + 30.0 * std::cos(0.5 * xb - 0.2 * y);
          double bg_b = 70.0 + 35.0 * std::sin(0.4 * xb + 0.6 * y);
          double d_mm = cfg.depth_background_mm + 40.0 * std::sin(0.3 * xb + 0.2 * y);
          bool in_blob = y >= by0 && y < by0 + bs && x >= bx0 && x < bx0 + bs;
          if (in_blob) {
            double c = 255.0 * cfg.object.contrast;
            bg_r = c;
            bg_g = 255.0 - c * 0.5;
            bg_b = c * 0.6;
            d_mm = cfg.depth_object_mm;
          }
          if (vad && y < H / 2 && x < W / 2) {
            // monitor analog: a background region flickers randomly
            double flick = cfg.vad_flicker * 255.0 * image_rng.uniform();
            bg_r = std::clamp(bg_r + flick - cfg.vad_flicker * 127.5, 0.0, 255.0);
            bg_g = std::clamp(bg_g + flick - cfg.vad_flicker * 127.5, 0.0, 255.0);
            bg_b = std::clamp(bg_b + flick - cfg.vad_flicker * 127.5, 0.0, 255.0);
            // the flickering light also disturbs the active-IR depth readings
            d_mm += cfg.vad_flicker * 900.0 * (image_rng.uniform() - 0.5);
          }
          std::size_t base = (static_cast<std::size_t>(y) * W + x) * 3;
          rgb.payload[base] = std::clamp(bg_r + cfg.image_noise * image_rng(), 0.0, 255.0);
          rgb.payload[base + 1] = std::clamp(bg_g + cfg.image_noise * image_rng(), 0.0, 255.0);
          rgb.payload[base + 2] = std::clamp(bg_b + cfg.image_noise * image_rng(), 0.0, 255.0);
          dep.payload[static_cast<std::size_t>(y) * W + x] =
              std::max(0.0, d_mm + 2.0 * cfg.image_noise * image_rng());
        }
      }
      rgb_seq.push_back(std::move(rgb));
      depth_seq.push_back(std::move(dep));
    }
  }

  ep.streams.validate();
  return ep;
}

// One manifest row per generated episode.
struct ManifestEntry {
  std::string path;     // episode directory, relative to the dataset root
  std::string split;    // train | val | eval
  Condition condition = Condition::Standing;
  std::string object;
  MovingPattern pattern = MovingPattern::Forward;
  std::uint64_t seed = 0;
};

struct DatasetPlan {
  std::vector<ScenarioConfig> episodes;
  std::vector<std::string> splits;  // parallel to episodes
};

// Full factorial over objects x patterns x conditions, n_per_cell repeats.
// Splits are per-episode, sized by largest-remainder rounding and assigned
// round-robin over a deterministic shuffle.
inline DatasetPlan plan_dataset(int n_per_cell, double train_frac, double val_frac,
                                double eval_frac, std::uint64_t seed,
                                const std::vector<Condition>& conditions = {Condition::Standing,
                                                                            Condition::Moving,
                                                                            Condition::Vad}) {
  if (n_per_cell <= 0) throw ConfigError("generate_dataset: n_per_cell must be positive");
  if (std::abs(train_frac + val_frac + eval_frac - 1.0) > 1e-9)
    throw ConfigError("generate_dataset: split ratios must sum to 1");

  DatasetPlan plan;
  for (const auto& obj : object_presets())
    for (int p = 0; p < 4; ++p)
      for (Condition c : conditions)
        for (int rep = 0; rep < n_per_cell; ++rep) {
          ScenarioConfig cfg;
          cfg.object = obj;
          cfg.pattern = static_cast<MovingPattern>(p);
          cfg.condition = c;
          cfg.seed = derive_seed(seed, obj.name + "/" + pattern_name(cfg.pattern) + "/" +
                                           condition_name(c) + "/" + std::to_string(rep));
          plan.episodes.push_back(cfg);
        }

  const std::size_t n = plan.episodes.size();
  // largest-remainder apportionment of episode counts per split
  std::array<double, 3> frac = {train_frac, val_frac, eval_frac};
  std::array<std::size_t, 3> count{};
  std::array<double, 3> rem{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    double exact = frac[static_cast<std::size_t>(i)] * static_cast<double>(n);
    count[static_cast<std::size_t>(i)] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    rem[static_cast<std::size_t>(i)] = exact - std::floor(exact + 1e-9);
    assigned += count[static_cast<std::size_t>(i)];
  }
  while (assigned < n) {
    int best = 0;
    for (int i = 1; i < 3; ++i)
      if (rem[static_cast<std::size_t>(i)] > rem[static_cast<std::size_t>(best)]) best = i;
    ++count[static_cast<std::size_t>(best)];
    rem[static_cast<std::size_t>(best)] = -1.0;
    ++assigned;
  }

  // deterministic shuffle, then slice into splits
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(derive_seed(seed, "dataset/shuffle"));
  for (std::size_t i = n; i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(u64_to_unit_double(rng()) * static_cast<double>(i));
    if (j >= i) j = i - 1;
    std::swap(order[i - 1], order[j]);
  }
  plan.splits.assign(n, "");
  std::size_t pos = 0;
  const char* names[3] = {"train", "val", "eval"};
  for (int s = 0; s < 3; ++s)
    for (std::size_t k = 0; k < count[static_cast<std::size_t>(s)]; ++k)
      plan.splits[order[pos++]] = names[s];
  return plan;
}

}  // namespace slipnap
