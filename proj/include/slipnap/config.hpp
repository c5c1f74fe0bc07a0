#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "slipnap/autoencoder.hpp"
#include "slipnap/common.hpp"
#include "slipnap/dsp.hpp"
#include "slipnap/fusion.hpp"
#include "slipnap/simulator.hpp"
#include "slipnap/streamsync.hpp"

namespace slipnap {

inline constexpr int kConfigVersion = 1;

// Whole-pipeline configuration. Serialized as a flat `key = value` document;
// unknown keys are rejected so typos surface as config errors.
struct PipelineConfig {
  int version = kConfigVersion;
  std::uint64_t seed = 1234;

  SyncConfig sync;
  double depth_max_mm = 4000.0;
  MfccConfig mfcc;
  FusionSpec fusion;

  int ae_depth = 5;
  int ae_bottleneck = 100;
  double ae_leaky_slope = 0.01;
  double ae_bn_eps = 1e-5;
  double ae_bn_momentum = 0.1;
  bool ae_use_batch_norm = true;

  TrainConfig train;

  double nap_quantile = 0.9;
  bool nap_covariance_convention = false;
  bool nap_include_input_block = false;

  int sim_n_per_cell = 6;
  double split_train = 0.55, split_val = 0.18, split_eval = 0.27;
  bool ablate_retrain_per_modality = true;

  AeArchitecture ae_architecture(int input_dim) const {
    AeArchitecture a = AeArchitecture::geometric(input_dim, ae_depth, ae_bottleneck);
    a.leaky_slope = ae_leaky_slope;
    a.bn_eps = ae_bn_eps;
    a.bn_momentum = ae_bn_momentum;
    a.use_batch_norm = ae_use_batch_norm;
    return a;
  }

  void validate() const {
    mfcc.validate();
    fusion.validate();
    train.validate();
    if (fusion.mfcc_dim != mfcc.n_mfcc)
      throw ConfigError("config: fusion.mfcc_dim must equal mfcc.n_mfcc");
    if (!(nap_quantile > 0.0 && nap_quantile <= 1.0))
      throw ConfigError("config: nap.quantile outside (0,1]");
    if (sim_n_per_cell <= 0) throw ConfigError("config: sim.n_per_cell must be positive");
  }
};

namespace detail {

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: bad boolean for " + key + ": " + v);
}

}  // namespace detail

inline std::string config_to_text(const PipelineConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << "version = " << c.version << "\n";
  os << "seed = " << c.seed << "\n";
  os << "sync.grid_hz = " << c.sync.grid_hz << "\n";
  os << "sync.tolerance_periods = " << c.sync.tolerance_periods << "\n";
  os << "sync.hold_last = " << (c.sync.hold_last ? "true" : "false") << "\n";
  os << "norm.depth_max_mm = " << c.depth_max_mm << "\n";
  os << "mfcc.sample_rate = " << c.mfcc.sample_rate << "\n";
  os << "mfcc.frame_len = " << c.mfcc.frame_len << "\n";
  os << "mfcc.n_fft = " << c.mfcc.n_fft << "\n";
  os << "mfcc.n_mels = " << c.mfcc.n_mels << "\n";
  os << "mfcc.n_mfcc = " << c.mfcc.n_mfcc << "\n";
  os << "mfcc.fmin = " << c.mfcc.fmin << "\n";
  os << "mfcc.fmax = " << c.mfcc.fmax << "\n";
  os << "mfcc.log_floor = " << c.mfcc.log_floor << "\n";
  os << "mfcc.pre_emphasis = " << (c.mfcc.pre_emphasis ? "true" : "false") << "\n";
  os << "fusion.seed = " << c.fusion.seed << "\n";
  os << "fusion.image_h = " << c.fusion.image_h << "\n";
  os << "fusion.image_w = " << c.fusion.image_w << "\n";
  os << "ae.depth = " << c.ae_depth << "\n";
  os << "ae.bottleneck = " << c.ae_bottleneck << "\n";
  os << "ae.leaky_slope = " << c.ae_leaky_slope << "\n";
  os << "ae.bn_eps = " << c.ae_bn_eps << "\n";
  os << "ae.bn_momentum = " << c.ae_bn_momentum << "\n";
  os << "ae.use_batch_norm = " << (c.ae_use_batch_norm ? "true" : "false") << "\n";
  os << "train.learning_rate = " << c.train.learning_rate << "\n";
  os << "train.batch_size = " << c.train.batch_size << "\n";
  os << "train.epochs = " << c.train.epochs << "\n";
  os << "train.patience = " << c.train.patience << "\n";
  os << "nap.quantile = " << c.nap_quantile << "\n";
  os << "nap.covariance_convention = " << (c.nap_covariance_convention ? "true" : "false") << "\n";
  os << "nap.include_input_block = " << (c.nap_include_input_block ? "true" : "false") << "\n";
  os << "sim.n_per_cell = " << c.sim_n_per_cell << "\n";
  os << "split.train = " << c.split_train << "\n";
  os << "split.val = " << c.split_val << "\n";
  os << "split.eval = " << c.split_eval << "\n";
  os << "ablate.retrain_per_modality = " << (c.ablate_retrain_per_modality ? "true" : "false")
     << "\n";
  return os.str();
}

inline PipelineConfig config_from_text(const std::string& text) {
  PipelineConfig c;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  bool explicit_fusion_seed = false;
  while (std::getline(is, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      bool blank = line.find_first_not_of(" \t\r") == std::string::npos;
      if (blank) continue;
      throw ConfigError("config: malformed line " + std::to_string(lineno));
    }
    auto trim = [](std::string s) {
      auto a = s.find_first_not_of(" \t\r");
      auto b = s.find_last_not_of(" \t\r");
      return (a == std::string::npos) ? std::string() : s.substr(a, b - a + 1);
    };
    std::string key = trim(line.substr(0, eq)), val = trim(line.substr(eq + 1));
    try {
      if (key == "version") c.version = std::stoi(val);
      else if (key == "seed") c.seed = std::stoull(val);
      else if (key == "sync.grid_hz") c.sync.grid_hz = std::stod(val);
      else if (key == "sync.tolerance_periods") c.sync.tolerance_periods = std::stod(val);
      else if (key == "sync.hold_last") c.sync.hold_last = detail::parse_bool(val, key);
      else if (key == "norm.depth_max_mm") c.depth_max_mm = std::stod(val);
      else if (key == "mfcc.sample_rate") c.mfcc.sample_rate = std::stod(val);
      else if (key == "mfcc.frame_len") c.mfcc.frame_len = std::stod(val);
      else if (key == "mfcc.n_fft") c.mfcc.n_fft = std::stoi(val);
      else if (key == "mfcc.n_mels") c.mfcc.n_mels = std::stoi(val);
      else if (key == "mfcc.n_mfcc") { c.mfcc.n_mfcc = std::stoi(val); c.fusion.mfcc_dim = c.mfcc.n_mfcc; }
      else if (key == "mfcc.fmin") c.mfcc.fmin = std::stod(val);
      else if (key == "mfcc.fmax") c.mfcc.fmax = std::stod(val);
      else if (key == "mfcc.log_floor") c.mfcc.log_floor = std::stod(val);
      else if (key == "mfcc.pre_emphasis") c.mfcc.pre_emphasis = detail::parse_bool(val, key);
      else if (key == "fusion.seed") { c.fusion.seed = std::stoull(val); explicit_fusion_seed = true; }
      else if (key == "fusion.image_h") c.fusion.image_h = std::stoi(val);
      else if (key == "fusion.image_w") c.fusion.image_w = std::stoi(val);
      else if (key == "ae.depth") c.ae_depth = std::stoi(val);
      else if (key == "ae.bottleneck") c.ae_bottleneck = std::stoi(val);
      else if (key == "ae.leaky_slope") c.ae_leaky_slope = std::stod(val);
      else if (key == "ae.bn_eps") c.ae_bn_eps = std::stod(val);
      else if (key == "ae.bn_momentum") c.ae_bn_momentum = std::stod(val);
      else if (key == "ae.use_batch_norm") c.ae_use_batch_norm = detail::parse_bool(val, key);
      else if (key == "train.learning_rate") c.train.learning_rate = std::stod(val);
      else if (key == "train.batch_size") c.train.batch_size = std::stoi(val);
      else if (key == "train.epochs") c.train.epochs = std::stoi(val);
      else if (key == "train.patience") c.train.patience = std::stoi(val);
      else if (key == "nap.quantile") c.nap_quantile = std::stod(val);
      else if (key == "nap.covariance_convention") c.nap_covariance_convention = detail::parse_bool(val, key);
      else if (key == "nap.include_input_block") c.nap_include_input_block = detail::parse_bool(val, key);
      else if (key == "sim.n_per_cell") c.sim_n_per_cell = std::stoi(val);
      else if (key == "split.train") c.split_train = std::stod(val);
      else if (key == "split.val") c.split_val = std::stod(val);
      else if (key == "split.eval") c.split_eval = std::stod(val);
      else if (key == "ablate.retrain_per_modality") c.ablate_retrain_per_modality = detail::parse_bool(val, key);
      else throw ConfigError("config: unknown key '" + key + "'");
    } catch (const std::invalid_argument&) {
      throw ConfigError("config: bad value for " + key + ": " + val);
    } catch (const std::out_of_range&) {
      throw ConfigError("config: value out of range for " + key + ": " + val);
    }
  }
  if (c.version != kConfigVersion)
    throw ConfigError("config: unsupported version " + std::to_string(c.version));
  // derived sub-seeds flow from the global seed unless set explicitly
  c.train.shuffle_seed = derive_seed(c.seed, "train/shuffle");
  if (!explicit_fusion_seed) c.fusion.seed = derive_seed(c.seed, "fusion");
  c.validate();
  return c;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config: " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return config_from_text(ss.str());
}

}  // namespace slipnap
