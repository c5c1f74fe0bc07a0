#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>

#include "slipnap/episode_io.hpp"
#include "slipnap/pipeline.hpp"

using namespace slipnap;

namespace {

PipelineConfig small_config() {
  PipelineConfig cfg;
  cfg.seed = 2024;
  cfg.train.shuffle_seed = derive_seed(cfg.seed, "train/shuffle");
  cfg.fusion.seed = derive_seed(cfg.seed, "fusion");
  cfg.train.epochs = 3;
  cfg.train.patience = 3;
  return cfg;
}

std::vector<EpisodeRecord> make_episodes(std::uint64_t base_seed, int n,
                                         Condition cond = Condition::Standing) {
  std::vector<EpisodeRecord> out;
  for (int i = 0; i < n; ++i) {
    ScenarioConfig sc;
    sc.seed = derive_seed(base_seed, "ep/" + std::to_string(i));
    sc.condition = cond;
    sc.object = object_presets()[static_cast<std::size_t>(i) % 8];
    auto ep = generate_episode(sc);
    out.push_back({std::move(ep.streams), cond, sc.object.name});
  }
  return out;
}

EpisodeSource vector_source(const std::vector<EpisodeRecord>& eps) {
  return [&eps](const std::function<void(const EpisodeRecord&)>& fn) {
    for (const auto& e : eps) fn(e);
  };
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("slipnap_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

// Full batch fit on a handful of simulated episodes; shared by several cases.
struct FittedFixture {
  PipelineConfig cfg = small_config();
  MfccExtractor mfcc{cfg.mfcc};
  std::vector<EpisodeRecord> train_eps = make_episodes(1, 3);
  std::vector<EpisodeRecord> val_eps = make_episodes(2, 2);
  NormRanges ranges;
  FusionOperator op{cfg.fusion};
  ModelBundle bundle;
  TrainLog log;

  FittedFixture() {
    ranges = fit_norm_ranges(vector_source(train_eps), cfg, mfcc);
    auto train = build_fused(vector_source(train_eps), cfg, mfcc, ranges, op, /*only_normal=*/true);
    auto val = build_fused(vector_source(val_eps), cfg, mfcc, ranges, op, /*only_normal=*/true);
    bundle = fit_detector(cfg, train.x, val.x, cfg.fusion, ranges, op, &log);
  }
};

FittedFixture& fitted() {
  static FittedFixture f;
  return f;
}

}  // namespace

TEST_CASE("config text round-trips and rejects junk") {
  PipelineConfig cfg = small_config();
  cfg.nap_quantile = 0.85;
  cfg.train.batch_size = 48;
  std::string text = config_to_text(cfg);
  PipelineConfig back = config_from_text(text);
  CHECK(config_to_text(back) == text);
  CHECK(back.nap_quantile == 0.85);
  CHECK(back.train.batch_size == 48);
  // sub-seeds derive from the global seed
  CHECK(back.train.shuffle_seed == derive_seed(cfg.seed, "train/shuffle"));

  PipelineConfig defaulted = config_from_text("seed = 99\n# comment line\n\n");
  CHECK(defaulted.seed == 99);
  CHECK(defaulted.fusion.seed == derive_seed(99, "fusion"));
  PipelineConfig pinned = config_from_text("seed = 99\nfusion.seed = 7\n");
  CHECK(pinned.fusion.seed == 7);

  CHECK_THROWS_WITH_AS(config_from_text("no.such.key = 1\n"), doctest::Contains("unknown key"),
                       ConfigError);
  CHECK_THROWS_AS(config_from_text("version = 9\n"), ConfigError);
  CHECK_THROWS_AS(config_from_text("train.epochs = pony\n"), ConfigError);
  CHECK_THROWS_AS(config_from_text("sync.hold_last = maybe\n"), ConfigError);
  CHECK_THROWS_AS(config_from_text("mfcc.n_mfcc = 64\n"), ConfigError);  // exceeds n_mels
}

TEST_CASE("episode files round-trip bit-exactly") {
  TempDir tmp;
  ScenarioConfig sc;
  sc.seed = 31;
  sc.condition = Condition::Moving;
  auto ep = generate_episode(sc);
  EpisodeMeta meta{ep.streams.episode_id, sc.condition, ep.drop_time, sc.object.name,
                   pattern_name(sc.pattern), sc.seed};
  write_episode(tmp.path / "ep0", ep.streams, meta);
  auto [ss, back] = read_episode(tmp.path / "ep0");

  CHECK(back.episode_id == meta.episode_id);
  CHECK(back.condition == Condition::Moving);
  REQUIRE(back.drop_time.has_value());
  CHECK(*back.drop_time == 5.0);
  CHECK(back.seed == 31);
  for (int m = 0; m < kNumModalities; ++m) {
    const auto& a = ep.streams.streams[m];
    const auto& b = ss.streams[m];
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].timestamp == b[i].timestamp);
      CHECK(a[i].shape == b[i].shape);
      CHECK(a[i].payload == b[i].payload);
    }
  }

  CHECK_THROWS_AS(read_episode(tmp.path / "missing"), DataError);
  CHECK_THROWS_AS(read_stream_file(tmp.path / "ep0" / "manifest.txt"), DataError);
}

TEST_CASE("ndjson frames round-trip") {
  ScenarioConfig sc;
  sc.seed = 32;
  auto ep = generate_episode(sc);
  for (int m = 0; m < kNumModalities; ++m) {
    const auto& f = ep.streams.streams[m].front();
    SensorFrame back = frame_from_ndjson(frame_to_ndjson(f));
    CHECK(back.modality == f.modality);
    CHECK(back.timestamp == f.timestamp);
    CHECK(back.shape == f.shape);
    CHECK(back.payload == f.payload);
  }
  CHECK_THROWS(frame_from_ndjson("{not json"));
  CHECK_THROWS_AS(frame_from_ndjson(R"({"modality":"sonar","timestamp":1,"shape":[1],"payload":[0]})"),
                  DataError);
  // payload inconsistent with shape
  CHECK_THROWS_AS(frame_from_ndjson(R"({"modality":"ft","timestamp":1,"shape":[6],"payload":[0,0]})"),
                  DataError);
}

TEST_CASE("dataset manifest round-trips") {
  TempDir tmp;
  std::vector<ManifestEntry> entries = {
      {"episodes/a", "train", Condition::Standing, "mug", MovingPattern::Forward, 1},
      {"episodes/b", "val", Condition::Vad, "banana", MovingPattern::Rotate, 2},
  };
  write_dataset_manifest(tmp.path / "manifest.tsv", entries);
  auto back = read_dataset_manifest(tmp.path / "manifest.tsv");
  REQUIRE(back.size() == 2);
  CHECK(back[0].path == "episodes/a");
  CHECK(back[1].condition == Condition::Vad);
  CHECK(back[1].pattern == MovingPattern::Rotate);
  CHECK(back[1].seed == 2);

  std::ofstream(tmp.path / "bad.tsv") << "only\ttwo\n";
  CHECK_THROWS_AS(read_dataset_manifest(tmp.path / "bad.tsv"), DataError);
}

TEST_CASE("fused segments and modality masks") {
  FusionSpec spec;
  CHECK(fused_segment(spec, Modality::Rgb) == std::make_pair<Eigen::Index, Eigen::Index>(0, 128));
  CHECK(fused_segment(spec, Modality::Depth) == std::make_pair<Eigen::Index, Eigen::Index>(128, 128));
  CHECK(fused_segment(spec, Modality::Audio) == std::make_pair<Eigen::Index, Eigen::Index>(256, 160));
  CHECK(fused_segment(spec, Modality::ForceTorque) ==
        std::make_pair<Eigen::Index, Eigen::Index>(416, 96));

  Eigen::MatrixXd x(512, 3);
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i % 512, i / 512) = static_cast<double>(i);
  auto ft_only = mask_rows(x, spec, {false, false, false, true});
  REQUIRE(ft_only.rows() == 96);
  CHECK(ft_only == x.middleRows(416, 96));
  auto rgb_audio = mask_rows(x, spec, {true, false, true, false});
  REQUIRE(rgb_audio.rows() == 288);
  CHECK(rgb_audio.topRows(128) == x.topRows(128));
  CHECK(rgb_audio.bottomRows(160) == x.middleRows(256, 160));
  CHECK_THROWS_AS(mask_rows(x, spec, {false, false, false, false}), ConfigError);

  FusionSpec no_rgb = spec;
  no_rgb.enabled[0] = false;
  CHECK_THROWS_WITH_AS(fused_segment(no_rgb, Modality::Rgb), doctest::Contains("rgb"), ConfigError);
  CHECK(fused_segment(no_rgb, Modality::Depth).first == 0);
}

TEST_CASE("detector fit produces a consistent bundle") {
  auto& f = fitted();
  CHECK(f.bundle.nap.kept_rank > 0);
  REQUIRE(f.bundle.nap.threshold.has_value());
  CHECK(*f.bundle.nap.threshold == fit_threshold(f.log.val_scores, f.cfg.nap_quantile));
  CHECK(f.log.train_loss.size() == 3);
  CHECK(f.log.best_epoch >= 0);
  for (double s : f.log.val_scores) CHECK(s >= 0.0);

  // scoring the validation data again reproduces the logged scores exactly
  auto val = build_fused(vector_source(f.val_eps), f.cfg, f.mfcc, f.ranges, f.op, true);
  Eigen::VectorXd again = score_fused(f.bundle, val.x);
  REQUIRE(again.size() == static_cast<Eigen::Index>(f.log.val_scores.size()));
  for (Eigen::Index i = 0; i < again.size(); ++i) CHECK(again[i] == f.log.val_scores[static_cast<std::size_t>(i)]);
}

TEST_CASE("bundle save/load round-trips bit-exactly") {
  auto& f = fitted();
  TempDir tmp;
  save_bundle(tmp.path / "model.slbn", f.bundle);
  ModelBundle back = load_bundle(tmp.path / "model.slbn");

  CHECK(config_to_text(back.config) == config_to_text(f.bundle.config));
  CHECK(back.norm.ft_lo == f.bundle.norm.ft_lo);
  CHECK(back.norm.mfcc_hi == f.bundle.norm.mfcc_hi);
  for (int m = 0; m < kNumModalities; ++m) CHECK(back.fusion_weights[m] == f.bundle.fusion_weights[m]);
  CHECK(back.ae.flatten_params() == f.bundle.ae.flatten_params());
  for (std::size_t i = 0; i < back.ae.layers().size(); ++i) {
    if (!back.ae.layers()[i].normalized) continue;
    CHECK(back.ae.layers()[i].running_mean == f.bundle.ae.layers()[i].running_mean);
    CHECK(back.ae.layers()[i].running_var == f.bundle.ae.layers()[i].running_var);
  }
  CHECK(back.nap.mu == f.bundle.nap.mu);
  CHECK(back.nap.v == f.bundle.nap.v);
  CHECK(back.nap.sigma_inv == f.bundle.nap.sigma_inv);
  CHECK(back.nap.kept_rank == f.bundle.nap.kept_rank);
  CHECK(back.nap.threshold == f.bundle.nap.threshold);
  CHECK(back.config_hash == f.bundle.config_hash);

  // reloaded model scores identically, including through restored fusion
  auto val = build_fused(vector_source(f.val_eps), f.cfg, f.mfcc, f.ranges,
                         restore_fusion(back), true);
  Eigen::VectorXd a = score_fused(f.bundle, val.x);
  Eigen::VectorXd b = score_fused(back, val.x);
  CHECK(a == b);

  std::ofstream(tmp.path / "junk.slbn") << "not a bundle";
  CHECK_THROWS_AS(load_bundle(tmp.path / "junk.slbn"), DataError);
}

TEST_CASE("streaming scorer matches the batch path") {
  auto& f = fitted();
  ScenarioConfig sc;
  sc.seed = 909;
  sc.condition = Condition::Standing;
  auto ep = generate_episode(sc);

  auto batch_scores = [&](const StreamSet& streams) {
    auto samples = synchronize(streams, f.bundle.config.sync);
    for (auto& s : samples) {
      s.mfcc = f.mfcc.extract(s.audio, s.tick_time).coefficients;
      f.bundle.norm.apply(s);
    }
    std::vector<std::pair<double, double>> out;
    for (const auto& s : samples) {
      FusedVector fv = f.op.fuse(s);
      Eigen::MatrixXd x = fv.values;
      out.emplace_back(s.tick_time, score_fused(f.bundle, x)[0]);
    }
    return out;
  };

  auto stream_scores = [&](const StreamSet& streams) {
    // interleave all frames by timestamp, as a live feed would
    std::vector<const SensorFrame*> all;
    for (int m = 0; m < kNumModalities; ++m)
      for (const auto& fr : streams.streams[m]) all.push_back(&fr);
    std::stable_sort(all.begin(), all.end(),
                     [](const SensorFrame* a, const SensorFrame* b) { return a->timestamp < b->timestamp; });
    StreamScorer scorer(f.bundle);
    std::vector<std::pair<double, double>> out;
    for (const auto* fr : all)
      for (const auto& r : scorer.feed(*fr)) out.emplace_back(r.tick_time, r.score);
    for (const auto& r : scorer.finish()) out.emplace_back(r.tick_time, r.score);
    return out;
  };

  SUBCASE("clean episode") {
    auto batch = batch_scores(ep.streams);
    auto stream = stream_scores(ep.streams);
    REQUIRE(batch.size() == 55);
    REQUIRE(stream.size() == batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      CHECK(stream[i].first == doctest::Approx(batch[i].first));
      CHECK(stream[i].second == doctest::Approx(batch[i].second).epsilon(1e-9));
    }
  }

  SUBCASE("episode with a gap still agrees (hold-last path)") {
    StreamSet gappy = ep.streams;
    auto& audio = gappy.stream(Modality::Audio);
    audio.erase(audio.begin() + 20);  // drop the chunk ending at 2.1 s
    auto batch = batch_scores(gappy);
    auto stream = stream_scores(gappy);
    REQUIRE(stream.size() == batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i)
      CHECK(stream[i].second == doctest::Approx(batch[i].second).epsilon(1e-9));
  }

  SUBCASE("non-monotone feed is rejected") {
    StreamScorer scorer(f.bundle);
    scorer.feed(ep.streams.stream(Modality::ForceTorque)[1]);
    CHECK_THROWS_AS(scorer.feed(ep.streams.stream(Modality::ForceTorque)[0]), DataError);
  }

  SUBCASE("per-tick stage timings are recorded") {
    StreamScorer scorer(f.bundle);
    for (const auto& fr : ep.streams.stream(Modality::Rgb)) scorer.feed(fr);
    for (const auto& fr : ep.streams.stream(Modality::Depth)) scorer.feed(fr);
    for (const auto& fr : ep.streams.stream(Modality::Audio)) scorer.feed(fr);
    for (const auto& fr : ep.streams.stream(Modality::ForceTorque)) scorer.feed(fr);
    scorer.finish();
    const auto& t = scorer.timings();
    CHECK(t.total_ms.size() == 55);
    CHECK(t.fusion_ms.size() == t.total_ms.size());
    CHECK(StageTimings::median(t.total_ms) > 0.0);
  }
}

TEST_CASE("nap input rows can include the input block") {
  auto& f = fitted();
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(512, 4).cwiseAbs();
  Eigen::MatrixXd plain = nap_input_rows(f.bundle.ae, x, false);
  Eigen::MatrixXd with_input = nap_input_rows(f.bundle.ae, x, true);
  CHECK(plain.cols() == f.bundle.ae.arch().pathway_dim());
  CHECK(with_input.cols() == plain.cols() + 512);
  CHECK((with_input.rightCols(plain.cols()) - plain).cwiseAbs().maxCoeff() < 1e-12);
  auto fwd = f.bundle.ae.forward_batch(x);
  CHECK((with_input.leftCols(512).transpose() - (x - fwd.x_hat)).cwiseAbs().maxCoeff() < 1e-12);
}
