// slipnap CLI: dataset generation, training, evaluation, ablation and
// streaming inference for the multimodal slip detector.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "slipnap/bundle.hpp"
#include "slipnap/config.hpp"
#include "slipnap/episode_io.hpp"
#include "slipnap/metrics.hpp"
#include "slipnap/pipeline.hpp"
#include "slipnap/simulator.hpp"

namespace fs = std::filesystem;
using namespace slipnap;

namespace {

PipelineConfig load_config_or_default(const std::string& path, std::optional<std::uint64_t> seed) {
  // defaults run through the parser so derived sub-seeds are set identically
  PipelineConfig cfg = path.empty() ? config_from_text("version = 1\n") : load_config(path);
  if (seed) {
    cfg.seed = *seed;
    cfg.train.shuffle_seed = derive_seed(cfg.seed, "train/shuffle");
    cfg.fusion.seed = derive_seed(cfg.seed, "fusion");
  }
  return cfg;
}

std::uint64_t hash_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open for hashing: " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[4096];
  while (is.read(buf, sizeof(buf)) || is.gcount() > 0)
    h = fnv1a(buf, static_cast<std::size_t>(is.gcount()), h);
  return h;
}

EpisodeSource manifest_source(const fs::path& root, const std::vector<ManifestEntry>& entries,
                              const std::string& split) {
  return [root, entries, split](const std::function<void(const EpisodeRecord&)>& cb) {
    for (const auto& e : entries) {
      if (e.split != split) continue;
      auto [streams, meta] = read_episode(root / e.path);
      EpisodeRecord rec;
      rec.streams = std::move(streams);
      rec.condition = e.condition;
      rec.object = e.object;
      cb(rec);
    }
  };
}

std::array<bool, kNumModalities> parse_mask(const std::string& csv) {
  if (csv.empty() || csv == "all") return {true, true, true, true};
  std::array<bool, kNumModalities> mask = {false, false, false, false};
  std::istringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    auto m = modality_from_name(tok);
    if (!m) throw ConfigError("unknown modality in mask: " + tok);
    mask[static_cast<std::size_t>(*m)] = true;
  }
  bool any = false;
  for (bool b : mask) any |= b;
  if (!any) throw ConfigError("modality mask excludes all modalities");
  return mask;
}

std::string mask_name(const std::array<bool, kNumModalities>& mask) {
  bool all = true;
  for (bool b : mask) all &= b;
  if (all) return "multimodal";
  std::string s;
  for (int m = 0; m < kNumModalities; ++m)
    if (mask[static_cast<std::size_t>(m)]) {
      if (!s.empty()) s += "+";
      s += modality_name(static_cast<Modality>(m));
    }
  return s;
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write: " + path.string());
  os << text;
}

std::string summary_text(const EvalReport& r, std::optional<double> threshold) {
  std::string s;
  s += "auroc = " + format_double(r.auroc) + "\n";
  s += "auprc = " + format_double(r.auprc) + "\n";
  if (threshold) s += "f1 = " + format_double(r.f1) + "\n";
  s += "positives = " + std::to_string(r.positives) + "\n";
  s += "negatives = " + std::to_string(r.negatives) + "\n";
  return s;
}

void write_report_files(const fs::path& dir, const EvalReport& r,
                        std::optional<double> threshold) {
  fs::create_directories(dir);
  write_text(dir / "roc.csv", roc_csv(r));
  write_text(dir / "prc.csv", prc_csv(r));
  write_text(dir / "summary.txt", summary_text(r, threshold));
}

int cmd_generate(const std::string& config_path, std::optional<std::uint64_t> seed,
                 const std::string& out_dir) {
  PipelineConfig cfg = load_config_or_default(config_path, seed);
  fs::path out(out_dir);
  fs::create_directories(out / "episodes");

  auto plan = plan_dataset(cfg.sim_n_per_cell, cfg.split_train, cfg.split_val, cfg.split_eval,
                           derive_seed(cfg.seed, "simulator"));
  std::vector<ManifestEntry> entries;
  std::size_t counts[3] = {0, 0, 0};
  for (std::size_t i = 0; i < plan.episodes.size(); ++i) {
    ScenarioConfig sc = plan.episodes[i];
    sc.image_h = cfg.fusion.image_h;
    sc.image_w = cfg.fusion.image_w;
    EpisodeBundle ep = generate_episode(sc);
    EpisodeMeta meta;
    meta.episode_id = ep.streams.episode_id;
    meta.condition = sc.condition;
    meta.drop_time = ep.drop_time;
    meta.object = sc.object.name;
    meta.pattern = pattern_name(sc.pattern);
    meta.seed = sc.seed;
    std::string rel = "episodes/" + ep.streams.episode_id;
    write_episode(out / rel, ep.streams, meta);
    ManifestEntry e;
    e.path = rel;
    e.split = plan.splits[i];
    e.condition = sc.condition;
    e.object = sc.object.name;
    e.pattern = sc.pattern;
    e.seed = sc.seed;
    entries.push_back(e);
    if (e.split == "train") ++counts[0];
    else if (e.split == "val") ++counts[1];
    else ++counts[2];
  }
  write_dataset_manifest(out / "manifest.txt", entries);
  write_text(out / "config.txt", config_to_text(cfg));
  std::cout << "episodes: " << entries.size() << " (train " << counts[0] << ", val " << counts[1]
            << ", eval " << counts[2] << ")\n";
  std::cout << "manifest: " << (out / "manifest.txt").string() << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed,
              const std::string& manifest_path, const std::string& bundle_path,
              const std::string& out_dir) {
  PipelineConfig cfg = load_config_or_default(config_path, seed);
  fs::path manifest(manifest_path);
  fs::path root = manifest.parent_path();
  auto entries = read_dataset_manifest(manifest);

  bool has_train = false, has_val = false;
  for (const auto& e : entries) {
    has_train |= e.split == "train";
    has_val |= e.split == "val";
  }
  if (!has_train) throw DataError("manifest has no train split");
  if (!has_val) throw DataError("manifest has no val split");

  MfccExtractor mfcc(cfg.mfcc);
  FusionOperator op = build_fusion(cfg.fusion);
  auto train_src = manifest_source(root, entries, "train");
  auto val_src = manifest_source(root, entries, "val");

  NormRanges ranges = fit_norm_ranges(train_src, cfg, mfcc);
  ranges.depth_hi = cfg.depth_max_mm;
  FusedDataset train_ds = build_fused(train_src, cfg, mfcc, ranges, op, /*only_normal=*/true);
  FusedDataset val_ds = build_fused(val_src, cfg, mfcc, ranges, op, /*only_normal=*/true);

  TrainLog log;
  ModelBundle bundle = fit_detector(cfg, train_ds.x, val_ds.x, cfg.fusion, ranges, op, &log);
  bundle.manifest_hash = hash_file(manifest);

  fs::path out(out_dir.empty() ? manifest.parent_path() : fs::path(out_dir));
  fs::create_directories(out);
  save_bundle(bundle_path.empty() ? (out / "model.slbn").string() : bundle_path, bundle);

  std::string losses = "epoch,train_loss,val_loss\n";
  for (std::size_t i = 0; i < log.train_loss.size(); ++i)
    losses += std::to_string(i) + "," + format_double(log.train_loss[i]) + "," +
              format_double(log.val_loss[i]) + "\n";
  write_text(out / "train_log.csv", losses);
  std::string vs = "score\n";
  for (double v : log.val_scores) vs += format_double(v) + "\n";
  write_text(out / "val_scores.csv", vs);

  std::cout << "train ticks: " << train_ds.x.cols() << ", val ticks: " << val_ds.x.cols() << "\n";
  std::cout << "best epoch: " << log.best_epoch << ", threshold: "
            << format_double(*bundle.nap.threshold) << "\n";
  return 0;
}

int cmd_eval(const std::string& bundle_path, const std::string& manifest_path,
             const std::string& mask_csv, const std::string& out_dir) {
  ModelBundle bundle = load_bundle(bundle_path);
  const PipelineConfig& cfg = bundle.config;
  fs::path manifest(manifest_path);
  fs::path root = manifest.parent_path();
  auto entries = read_dataset_manifest(manifest);
  bool has_eval = false;
  for (const auto& e : entries) has_eval |= e.split == "eval";
  if (!has_eval) throw DataError("manifest has no eval split");

  auto mask = parse_mask(mask_csv);
  MfccExtractor mfcc(cfg.mfcc);
  FusionOperator op = restore_fusion(bundle);
  FusedDataset ds = build_fused(manifest_source(root, entries, "eval"), cfg, mfcc, bundle.norm,
                                op, /*only_normal=*/false);

  // zero excluded modalities at the fusion input (linear map, zero bias:
  // zero inputs give zero embedding segments)
  for (int m = 0; m < kNumModalities; ++m) {
    if (mask[static_cast<std::size_t>(m)]) continue;
    auto [off, len] = fused_segment(bundle.fusion_spec, static_cast<Modality>(m));
    ds.x.middleRows(off, len).setZero();
  }

  Eigen::VectorXd scores = score_fused(bundle, ds.x);
  std::vector<double> sc(scores.data(), scores.data() + scores.size());
  std::vector<Label> labels;
  std::vector<std::string> by_condition, by_object;
  for (const auto& m : ds.meta) {
    labels.push_back(m.label);
    by_condition.push_back(std::string("condition_") + condition_name(m.condition));
    by_object.push_back("object_" + m.object);
  }

  fs::path out(out_dir.empty() ? "eval_out" : out_dir);
  auto threshold = bundle.nap.threshold;
  EvalReport overall = make_report(sc, labels, threshold);
  write_report_files(out / "all", overall, threshold);
  for (const auto& [name, rep] : report_by_group(by_condition, sc, labels, threshold))
    write_report_files(out / name, rep, threshold);
  for (const auto& [name, rep] : report_by_group(by_object, sc, labels, threshold))
    write_report_files(out / name, rep, threshold);

  std::string table = "group,auroc,auprc,f1\n";
  table += mask_name(mask) + "/all," + format_double(overall.auroc) + "," +
           format_double(overall.auprc) + "," + format_double(overall.f1) + "\n";
  for (const auto& [name, rep] : report_by_group(by_condition, sc, labels, threshold))
    table += mask_name(mask) + "/" + name + "," + format_double(rep.auroc) + "," +
             format_double(rep.auprc) + "," + format_double(rep.f1) + "\n";
  write_text(out / "summary.csv", table);
  std::cout << table;
  return 0;
}

int cmd_ablate(const std::string& config_path, std::optional<std::uint64_t> seed,
               const std::string& manifest_path, const std::string& out_dir) {
  PipelineConfig cfg = load_config_or_default(config_path, seed);
  fs::path manifest(manifest_path);
  fs::path root = manifest.parent_path();
  auto entries = read_dataset_manifest(manifest);

  MfccExtractor mfcc(cfg.mfcc);
  FusionOperator op = build_fusion(cfg.fusion);
  auto train_src = manifest_source(root, entries, "train");
  auto val_src = manifest_source(root, entries, "val");
  auto eval_src = manifest_source(root, entries, "eval");

  NormRanges ranges = fit_norm_ranges(train_src, cfg, mfcc);
  ranges.depth_hi = cfg.depth_max_mm;
  FusedDataset train_ds = build_fused(train_src, cfg, mfcc, ranges, op, true);
  FusedDataset val_ds = build_fused(val_src, cfg, mfcc, ranges, op, true);
  FusedDataset eval_ds = build_fused(eval_src, cfg, mfcc, ranges, op, false);

  std::vector<Label> labels;
  std::vector<std::string> by_condition;
  for (const auto& m : eval_ds.meta) {
    labels.push_back(m.label);
    by_condition.push_back(std::string("condition_") + condition_name(m.condition));
  }

  const std::array<std::array<bool, kNumModalities>, 5> masks = {{
      {true, true, true, true},     // multimodal
      {false, false, false, true},  // force-torque
      {true, false, false, false},  // rgb
      {false, true, false, false},  // depth
      {false, false, true, false},  // mic
  }};

  fs::path out(out_dir.empty() ? "ablation_out" : out_dir);
  fs::create_directories(out);
  std::string table = "modalities,condition,auroc,auprc,f1\n";

  for (const auto& mask : masks) {
    Eigen::MatrixXd train_x, val_x, eval_x;
    ModelBundle bundle;
    if (cfg.ablate_retrain_per_modality) {
      train_x = mask_rows(train_ds.x, cfg.fusion, mask);
      val_x = mask_rows(val_ds.x, cfg.fusion, mask);
      eval_x = mask_rows(eval_ds.x, cfg.fusion, mask);
      FusionSpec sub = cfg.fusion;
      sub.enabled = mask;
      bundle = fit_detector(cfg, train_x, val_x, sub, ranges, op);
    } else {
      auto zero_masked = [&](Eigen::MatrixXd x) {
        for (int m = 0; m < kNumModalities; ++m) {
          if (mask[static_cast<std::size_t>(m)]) continue;
          auto [off, len] = fused_segment(cfg.fusion, static_cast<Modality>(m));
          x.middleRows(off, len).setZero();
        }
        return x;
      };
      train_x = zero_masked(train_ds.x);
      val_x = zero_masked(val_ds.x);
      eval_x = zero_masked(eval_ds.x);
      bundle = fit_detector(cfg, train_x, val_x, cfg.fusion, ranges, op);
    }
    Eigen::VectorXd scores = score_fused(bundle, eval_x);
    std::vector<double> sc(scores.data(), scores.data() + scores.size());
    auto threshold = bundle.nap.threshold;
    std::string row_name = mask_name(mask);
    EvalReport overall = make_report(sc, labels, threshold);
    write_report_files(out / row_name / "all", overall, threshold);
    table += row_name + ",all," + format_double(overall.auroc) + "," +
             format_double(overall.auprc) + "," + format_double(overall.f1) + "\n";
    for (const auto& [name, rep] : report_by_group(by_condition, sc, labels, threshold)) {
      write_report_files(out / row_name / name, rep, threshold);
      table += row_name + "," + name + "," + format_double(rep.auroc) + "," +
               format_double(rep.auprc) + "," + format_double(rep.f1) + "\n";
    }
  }
  write_text(out / "ablation_summary.csv", table);
  std::cout << table;
  return 0;
}

int cmd_score_stream(const std::string& bundle_path, std::istream& in, std::ostream& out_stream) {
  ModelBundle bundle = load_bundle(bundle_path);
  StreamScorer scorer(bundle);
  std::string line;
  long skipped = 0;
  auto emit = [&](const std::vector<StreamTickResult>& ticks) {
    for (const auto& t : ticks) {
      nlohmann::json j;
      j["tick_time"] = t.tick_time;
      j["score"] = t.score;
      j["predicted"] = (t.predicted == Label::Abnormal) ? "abnormal" : "normal";
      out_stream << j.dump() << "\n";
    }
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      emit(scorer.feed(frame_from_ndjson(line)));
    } catch (const nlohmann::json::exception& e) {
      std::cerr << "warning: skipping malformed line: " << e.what() << "\n";
      ++skipped;
    } catch (const DataError& e) {
      std::cerr << "warning: skipping bad frame: " << e.what() << "\n";
      ++skipped;
    }
  }
  emit(scorer.finish());
  const auto& t = scorer.timings();
  std::cerr << "ticks scored: " << t.total_ms.size() << ", skipped lines: " << skipped << "\n";
  if (!t.total_ms.empty()) {
    std::cerr << "per-tick latency (median ms): total " << StageTimings::median(t.total_ms)
              << ", fusion " << StageTimings::median(t.fusion_ms) << ", autoencoder "
              << StageTimings::median(t.autoencoder_ms) << ", nap "
              << StageTimings::median(t.nap_ms) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multimodal slip anomaly detection workbench"};
  app.require_subcommand(1);

  std::string config_path, manifest_path, bundle_path, mask_csv, out_dir;
  std::optional<std::uint64_t> seed;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "pipeline config file");
    cmd->add_option("--seed", seed, "override the global seed");
    cmd->add_option("--out", out_dir, "output directory");
  };

  auto* gen = app.add_subcommand("generate", "generate a synthetic dataset");
  add_common(gen);
  gen->get_option("--out")->required();

  auto* train = app.add_subcommand("train", "train the detector and write a model bundle");
  add_common(train);
  train->add_option("--manifest", manifest_path, "dataset manifest")->required();
  train->add_option("--bundle", bundle_path, "output bundle path");

  auto* eval = app.add_subcommand("eval", "evaluate a bundle on the eval split");
  eval->add_option("--bundle", bundle_path, "model bundle")->required();
  eval->add_option("--manifest", manifest_path, "dataset manifest")->required();
  eval->add_option("--mask", mask_csv, "modality mask, csv of rgb,depth,mic,ft or 'all'");
  eval->add_option("--out", out_dir, "output directory");

  auto* ablate = app.add_subcommand("ablate", "multimodal vs unimodal comparison table");
  add_common(ablate);
  ablate->add_option("--manifest", manifest_path, "dataset manifest")->required();

  auto* stream = app.add_subcommand("score-stream", "score NDJSON frames from stdin");
  stream->add_option("--bundle", bundle_path, "model bundle")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_generate(config_path, seed, out_dir);
    if (train->parsed()) return cmd_train(config_path, seed, manifest_path, bundle_path, out_dir);
    if (eval->parsed()) return cmd_eval(bundle_path, manifest_path, mask_csv, out_dir);
    if (ablate->parsed()) return cmd_ablate(config_path, seed, manifest_path, out_dir);
    if (stream->parsed()) return cmd_score_stream(bundle_path, std::cin, std::cout);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const TrainingError& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return 4;
  } catch (const MetricError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
