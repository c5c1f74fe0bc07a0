#include <doctest.h>

#include <random>

#include "slipnap/streamsync.hpp"

using namespace slipnap;

namespace {

SensorFrame frame(Modality m, double ts, std::vector<std::uint32_t> shape, double fill) {
  SensorFrame f;
  f.modality = m;
  f.timestamp = ts;
  f.shape = std::move(shape);
  f.payload.assign(f.expected_size(), fill);
  return f;
}

// All four modalities with scalar-ish payloads at the given timestamps.
StreamSet make_streams(const std::vector<double> (&ts_per_modality)[4]) {
  StreamSet ss;
  ss.episode_id = "test";
  const std::vector<std::uint32_t> shapes[4] = {{2, 2, 3}, {2, 2}, {16}, {6}};
  for (int m = 0; m < 4; ++m)
    for (double t : ts_per_modality[m])
      ss.stream(static_cast<Modality>(m)).push_back(frame(static_cast<Modality>(m), t, shapes[m], t));
  return ss;
}

StreamSet grid_streams(double length_s) {
  std::vector<double> grid;
  for (int k = 1; k <= static_cast<int>(std::lround(length_s * 10)); ++k) grid.push_back(k * 0.1);
  const std::vector<double> ts[4] = {grid, grid, grid, grid};
  return make_streams(ts);
}

// Scripted oracle: nearest-frame assignment per tick from explicit distance
// enumeration, with the same hold-last/drop rules.
struct OracleTick {
  double t;
  double value[4];
  bool present;
};

std::vector<OracleTick> sync_oracle(const std::vector<double> (&ts)[4], double period = 0.1,
                                    double tol = 0.05) {
  double lo = -1e300, hi = 1e300;
  for (int m = 0; m < 4; ++m) {
    lo = std::max(lo, ts[m].front());
    hi = std::min(hi, ts[m].back());
  }
  std::vector<OracleTick> out;
  double held[4];
  bool have_held[4] = {false, false, false, false};
  for (long k = 1;; ++k) {
    double t = k * period;
    if (t < lo - 1e-9) continue;
    if (t > hi + 1e-9) break;
    OracleTick tick{t, {0, 0, 0, 0}, true};
    for (int m = 0; m < 4 && tick.present; ++m) {
      double best = 1e300, best_ts = 0;
      for (double f : ts[m]) {
        double d = std::abs(f - t);
        if (d < best - 1e-12) {  // strict improvement; ties keep the earlier frame
          best = d;
          best_ts = f;
        }
      }
      if (best <= tol + 1e-9) {
        tick.value[m] = best_ts;
      } else if (have_held[m]) {
        tick.value[m] = held[m];
      } else {
        tick.present = false;
      }
    }
    if (tick.present)
      for (int m = 0; m < 4; ++m) {
        held[m] = tick.value[m];
        have_held[m] = true;
      }
    out.push_back(tick);
  }
  std::vector<OracleTick> present;
  for (auto& t : out)
    if (t.present) present.push_back(t);
  return present;
}

double slot_value(const SyncedSample& s, int m) {
  switch (static_cast<Modality>(m)) {
    case Modality::Rgb: return s.rgb[0];
    case Modality::Depth: return s.depth[0];
    case Modality::Audio: return s.audio[0];
    default: return s.ft[0];
  }
}

}  // namespace

TEST_CASE("nearest selection prefers the closer frame") {
  const std::vector<double> ts[4] = {{0.08, 0.13}, {0.08, 0.13}, {0.08, 0.13}, {0.08, 0.13}};
  auto out = synchronize(make_streams(ts));
  REQUIRE(out.size() >= 1);
  CHECK(out[0].tick_time == doctest::Approx(0.1));
  CHECK(out[0].rgb[0] == doctest::Approx(0.08));  // distance 0.02 beats 0.03
}

TEST_CASE("identity alignment: grid-sampled streams round-trip bit-identically") {
  StreamSet ss = grid_streams(5.5);
  auto out = synchronize(ss);
  REQUIRE(out.size() == 55);
  for (std::size_t i = 0; i < out.size(); ++i) {
    double expect = (i + 1) * 0.1;
    CHECK(out[i].tick_time == doctest::Approx(expect));
    // bit-identical payloads
    CHECK(out[i].rgb[0] == ss.stream(Modality::Rgb)[i].payload[0]);
    CHECK(out[i].ft[0] == ss.stream(Modality::ForceTorque)[i].payload[0]);
  }
}

TEST_CASE("gap triggers hold-last") {
  // audio missing around t=0.30 (frames at 0.1 0.2 then 0.42...)
  std::vector<double> grid = {0.1, 0.2, 0.3, 0.4, 0.5};
  std::vector<double> audio = {0.1, 0.2, 0.42, 0.5};
  const std::vector<double> ts[4] = {grid, grid, audio, grid};
  auto out = synchronize(make_streams(ts));
  REQUIRE(out.size() == 5);
  // tick 0.3: nearest audio frame 0.42 or 0.2, both > 50 ms away -> hold 0.2
  CHECK(out[2].tick_time == doctest::Approx(0.3));
  CHECK(out[2].audio[0] == doctest::Approx(0.2));
  // tick 0.4 picks 0.42 (20 ms away)
  CHECK(out[3].audio[0] == doctest::Approx(0.42));
}

TEST_CASE("missing modality and non-monotone streams are rejected") {
  StreamSet ss = grid_streams(1.0);
  ss.stream(Modality::Audio).clear();
  CHECK_THROWS_WITH_AS(synchronize(ss), doctest::Contains("audio"), DataError);

  StreamSet ss2 = grid_streams(1.0);
  std::swap(ss2.stream(Modality::Depth)[2], ss2.stream(Modality::Depth)[3]);
  CHECK_THROWS_WITH_AS(synchronize(ss2), doctest::Contains("depth"), DataError);
}

TEST_CASE("random timestamp sets match the scripted oracle") {
  std::mt19937_64 rng(404);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> ts[4];
    for (int m = 0; m < 4; ++m) {
      double t = 0.02 + 0.3 * u64_to_unit_double(rng());
      while (t < 4.0) {
        ts[m].push_back(t);
        t += 0.02 + 0.25 * u64_to_unit_double(rng());
      }
      if (ts[m].empty()) ts[m].push_back(1.0);
    }
    auto expected = sync_oracle(ts);
    auto got = synchronize(make_streams(ts));
    REQUIRE(got.size() == expected.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].tick_time == doctest::Approx(expected[i].t));
      for (int m = 0; m < 4; ++m)
        CHECK(slot_value(got[i], m) == doctest::Approx(expected[i].value[m]).epsilon(1e-12));
    }
  }
}

TEST_CASE("minmax_normalize") {
  CHECK(minmax_normalize(5, 0, 10) == doctest::Approx(0.5));
  CHECK(minmax_normalize(255, 0, 255) == doctest::Approx(1.0));
  CHECK(minmax_normalize(-3, 0, 10) == doctest::Approx(0.0));
  CHECK(minmax_normalize(17, 0, 10) == doctest::Approx(1.0));
  CHECK_THROWS_AS(minmax_normalize(1, 5, 5), ConfigError);
  CHECK_THROWS_AS(minmax_normalize(1, 7, 5), ConfigError);

  SUBCASE("monotone within range") {
    std::mt19937_64 rng(9);
    for (int i = 0; i < 200; ++i) {
      double a = 10 * u64_to_unit_double(rng());
      double b = 10 * u64_to_unit_double(rng());
      if (a > b) std::swap(a, b);
      CHECK(minmax_normalize(a, 0, 10) <= minmax_normalize(b, 0, 10));
      CHECK(minmax_normalize(a, 0, 10) >= 0.0);
      CHECK(minmax_normalize(b, 0, 10) <= 1.0);
    }
  }
}

TEST_CASE("label_ticks windows") {
  StreamSet ss = grid_streams(5.5);
  auto samples = synchronize(ss);
  REQUIRE(samples.size() == 55);

  SUBCASE("drop at 5.0 with 0.5 window") {
    auto labeled = label_ticks(samples, 5.0, 0.5);
    REQUIRE(labeled.size() == 55);
    long normal = 0, abnormal = 0;
    for (const auto& s : labeled)
      (s.label == Label::Normal ? normal : abnormal)++;
    CHECK(normal == 50);
    CHECK(abnormal == 5);
    CHECK(labeled[49].label == Label::Normal);   // t = 5.0
    CHECK(labeled[50].label == Label::Abnormal); // t = 5.1
  }
  SUBCASE("ticks beyond the window are excluded") {
    auto labeled = label_ticks(samples, 4.0, 0.5);
    CHECK(labeled.size() == 45);  // 40 normal + 5 abnormal, 1.0 s trimmed
  }
  SUBCASE("no drop time: all normal") {
    auto labeled = label_ticks(samples, std::nullopt);
    CHECK(labeled.size() == 55);
    for (const auto& s : labeled) CHECK(s.label == Label::Normal);
  }
  SUBCASE("zero window: no abnormal ticks") {
    auto labeled = label_ticks(samples, 5.0, 0.0);
    CHECK(labeled.size() == 50);
    for (const auto& s : labeled) CHECK(s.label == Label::Normal);
  }
}

TEST_CASE("norm ranges fit and apply") {
  std::vector<SyncedSample> samples(3);
  for (int i = 0; i < 3; ++i) {
    auto& s = samples[static_cast<std::size_t>(i)];
    s.rgb = Eigen::VectorXd::Constant(12, 128.0);
    s.depth = Eigen::VectorXd::Constant(4, 1000.0);
    s.ft = Eigen::VectorXd::Constant(6, static_cast<double>(i));
    s.mfcc = Eigen::VectorXd::Constant(13, -10.0 + i);
  }
  NormRanges r;
  r.fit(samples);
  SyncedSample s = samples[1];
  r.apply(s);
  CHECK(s.rgb[0] == doctest::Approx(128.0 / 255.0));
  CHECK(s.depth[0] == doctest::Approx(0.25));
  CHECK(s.ft[0] == doctest::Approx(0.5));
  CHECK(s.mfcc[0] == doctest::Approx(0.5));

  // out-of-range evaluation values clamp rather than error
  SyncedSample wild = samples[0];
  wild.ft.setConstant(99.0);
  r.apply(wild);
  CHECK(wild.ft[0] == doctest::Approx(1.0));
}
