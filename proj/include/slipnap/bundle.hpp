#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <fstream>
#include <string>

#include "slipnap/autoencoder.hpp"
#include "slipnap/common.hpp"
#include "slipnap/config.hpp"
#include "slipnap/fusion.hpp"
#include "slipnap/nap.hpp"
#include "slipnap/streamsync.hpp"

namespace slipnap {

inline constexpr std::uint32_t kBundleFormatVersion = 1;

// Everything needed to score a stream: normalization ranges, frozen fusion
// weights, autoencoder parameters (with running statistics), the fitted NAP
// model and threshold, plus provenance hashes. Round-trips bit-exactly.
struct ModelBundle {
  PipelineConfig config;
  NormRanges norm;
  FusionSpec fusion_spec;
  std::vector<std::vector<double>> fusion_weights[kNumModalities];
  AeModel ae;
  NapModel nap;
  std::uint64_t config_hash = 0;
  std::uint64_t manifest_hash = 0;
  std::string created_at;  // excluded from determinism guarantees
};

namespace detail {

inline void write_vec(std::ostream& os, const Eigen::VectorXd& v) {
  write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(v.size()));
  write_f64_array(os, v.data(), static_cast<std::size_t>(v.size()));
}

inline Eigen::VectorXd read_vec(std::istream& is) {
  auto n = read_pod<std::uint64_t>(is);
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  read_f64_array(is, v.data(), n);
  return v;
}

inline void write_mat(std::ostream& os, const Eigen::MatrixXd& m) {
  write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(m.rows()));
  write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(m.cols()));
  write_f64_array(os, m.data(), static_cast<std::size_t>(m.size()));
}

inline Eigen::MatrixXd read_mat(std::istream& is) {
  auto r = read_pod<std::uint64_t>(is);
  auto c = read_pod<std::uint64_t>(is);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  read_f64_array(is, m.data(), static_cast<std::size_t>(m.size()));
  return m;
}

inline void write_conv2d_stack(std::ostream& os, const std::vector<Conv2dSpec>& stack) {
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(stack.size()));
  for (const auto& l : stack) {
    write_pod<std::int32_t>(os, l.in_ch);
    write_pod<std::int32_t>(os, l.out_ch);
    write_pod<std::int32_t>(os, l.kernel);
    write_pod<std::int32_t>(os, l.pool);
  }
}

inline std::vector<Conv2dSpec> read_conv2d_stack(std::istream& is) {
  auto n = read_pod<std::uint32_t>(is);
  std::vector<Conv2dSpec> stack(n);
  for (auto& l : stack) {
    l.in_ch = read_pod<std::int32_t>(is);
    l.out_ch = read_pod<std::int32_t>(is);
    l.kernel = read_pod<std::int32_t>(is);
    l.pool = read_pod<std::int32_t>(is);
  }
  return stack;
}

inline void write_conv1d_stack(std::ostream& os, const std::vector<Conv1dSpec>& stack) {
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(stack.size()));
  for (const auto& l : stack) {
    write_pod<std::int32_t>(os, l.in_ch);
    write_pod<std::int32_t>(os, l.out_ch);
    write_pod<std::int32_t>(os, l.kernel);
    write_pod<std::int32_t>(os, l.pool);
  }
}

inline std::vector<Conv1dSpec> read_conv1d_stack(std::istream& is) {
  auto n = read_pod<std::uint32_t>(is);
  std::vector<Conv1dSpec> stack(n);
  for (auto& l : stack) {
    l.in_ch = read_pod<std::int32_t>(is);
    l.out_ch = read_pod<std::int32_t>(is);
    l.kernel = read_pod<std::int32_t>(is);
    l.pool = read_pod<std::int32_t>(is);
  }
  return stack;
}

}  // namespace detail

inline void save_bundle(const std::filesystem::path& path, const ModelBundle& b) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open bundle for writing: " + path.string());
  os.write("SLBN", 4);
  write_pod<std::uint32_t>(os, kBundleFormatVersion);
  write_string(os, config_to_text(b.config));
  // normalization ranges
  write_pod<double>(os, b.norm.rgb_lo);
  write_pod<double>(os, b.norm.rgb_hi);
  write_pod<double>(os, b.norm.depth_lo);
  write_pod<double>(os, b.norm.depth_hi);
  detail::write_vec(os, b.norm.ft_lo);
  detail::write_vec(os, b.norm.ft_hi);
  detail::write_vec(os, b.norm.mfcc_lo);
  detail::write_vec(os, b.norm.mfcc_hi);
  // fusion spec + weights, fixed modality order
  write_pod<std::uint64_t>(os, b.fusion_spec.seed);
  write_pod<std::int32_t>(os, b.fusion_spec.image_h);
  write_pod<std::int32_t>(os, b.fusion_spec.image_w);
  write_pod<std::int32_t>(os, b.fusion_spec.mfcc_dim);
  write_pod<std::int32_t>(os, b.fusion_spec.ft_dim);
  for (bool e : b.fusion_spec.enabled) write_pod<std::uint8_t>(os, e ? 1 : 0);
  detail::write_conv2d_stack(os, b.fusion_spec.rgb_stack);
  detail::write_conv2d_stack(os, b.fusion_spec.depth_stack);
  detail::write_conv1d_stack(os, b.fusion_spec.audio_stack);
  detail::write_conv1d_stack(os, b.fusion_spec.ft_stack);
  for (int m = 0; m < kNumModalities; ++m) {
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(b.fusion_weights[m].size()));
    for (const auto& w : b.fusion_weights[m]) {
      write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(w.size()));
      write_f64_array(os, w.data(), w.size());
    }
  }
  // autoencoder: architecture, then per-layer parameters and running stats
  const auto& arch = b.ae.arch();
  write_pod<std::int32_t>(os, arch.input_dim);
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(arch.encoder_widths.size()));
  for (int w : arch.encoder_widths) write_pod<std::int32_t>(os, w);
  write_pod<double>(os, arch.leaky_slope);
  write_pod<double>(os, arch.bn_eps);
  write_pod<double>(os, arch.bn_momentum);
  write_pod<std::uint8_t>(os, arch.use_batch_norm ? 1 : 0);
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(b.ae.layers().size()));
  for (const auto& l : b.ae.layers()) {
    detail::write_mat(os, l.w);
    detail::write_vec(os, l.b);
    write_pod<std::uint8_t>(os, l.normalized ? 1 : 0);
    if (l.normalized) {
      detail::write_vec(os, l.gamma);
      detail::write_vec(os, l.beta);
      detail::write_vec(os, l.running_mean);
      detail::write_vec(os, l.running_var);
    }
  }
  // NAP model: sigma stored pre-inversion alongside the truncated inverse
  detail::write_vec(os, b.nap.mu);
  detail::write_mat(os, b.nap.v);
  detail::write_vec(os, b.nap.sigma);
  detail::write_vec(os, b.nap.sigma_inv);
  write_pod<std::int32_t>(os, b.nap.kept_rank);
  write_pod<std::uint8_t>(os, b.nap.covariance_convention ? 1 : 0);
  write_pod<std::int64_t>(os, static_cast<std::int64_t>(b.nap.n_rows));
  write_pod<std::uint8_t>(os, b.nap.threshold ? 1 : 0);
  if (b.nap.threshold) write_pod<double>(os, *b.nap.threshold);
  // provenance
  write_pod<std::uint64_t>(os, b.config_hash);
  write_pod<std::uint64_t>(os, b.manifest_hash);
  write_string(os, b.created_at);
  if (!os) throw DataError("bundle write failed: " + path.string());
}

inline ModelBundle load_bundle(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open bundle: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "SLBN") throw DataError("bad bundle magic in " + path.string());
  auto version = read_pod<std::uint32_t>(is);
  if (version != kBundleFormatVersion)
    throw DataError("unsupported bundle version " + std::to_string(version));
  ModelBundle b;
  b.config = config_from_text(read_string(is));
  b.norm.rgb_lo = read_pod<double>(is);
  b.norm.rgb_hi = read_pod<double>(is);
  b.norm.depth_lo = read_pod<double>(is);
  b.norm.depth_hi = read_pod<double>(is);
  b.norm.ft_lo = detail::read_vec(is);
  b.norm.ft_hi = detail::read_vec(is);
  b.norm.mfcc_lo = detail::read_vec(is);
  b.norm.mfcc_hi = detail::read_vec(is);
  b.fusion_spec.seed = read_pod<std::uint64_t>(is);
  b.fusion_spec.image_h = read_pod<std::int32_t>(is);
  b.fusion_spec.image_w = read_pod<std::int32_t>(is);
  b.fusion_spec.mfcc_dim = read_pod<std::int32_t>(is);
  b.fusion_spec.ft_dim = read_pod<std::int32_t>(is);
  for (auto& e : b.fusion_spec.enabled) e = read_pod<std::uint8_t>(is) != 0;
  b.fusion_spec.rgb_stack = detail::read_conv2d_stack(is);
  b.fusion_spec.depth_stack = detail::read_conv2d_stack(is);
  b.fusion_spec.audio_stack = detail::read_conv1d_stack(is);
  b.fusion_spec.ft_stack = detail::read_conv1d_stack(is);
  for (int m = 0; m < kNumModalities; ++m) {
    auto n_layers = read_pod<std::uint32_t>(is);
    b.fusion_weights[m].resize(n_layers);
    for (auto& w : b.fusion_weights[m]) {
      auto n = read_pod<std::uint64_t>(is);
      w.resize(n);
      read_f64_array(is, w.data(), n);
    }
  }
  AeArchitecture arch;
  arch.input_dim = read_pod<std::int32_t>(is);
  auto n_widths = read_pod<std::uint32_t>(is);
  arch.encoder_widths.resize(n_widths);
  for (auto& w : arch.encoder_widths) w = read_pod<std::int32_t>(is);
  arch.leaky_slope = read_pod<double>(is);
  arch.bn_eps = read_pod<double>(is);
  arch.bn_momentum = read_pod<double>(is);
  arch.use_batch_norm = read_pod<std::uint8_t>(is) != 0;
  b.ae = AeModel(arch, 0);
  auto n_layers = read_pod<std::uint32_t>(is);
  if (n_layers != b.ae.layers().size()) throw DataError("bundle: layer count mismatch");
  for (auto& l : b.ae.layers()) {
    l.w = detail::read_mat(is);
    l.b = detail::read_vec(is);
    l.normalized = read_pod<std::uint8_t>(is) != 0;
    if (l.normalized) {
      l.gamma = detail::read_vec(is);
      l.beta = detail::read_vec(is);
      l.running_mean = detail::read_vec(is);
      l.running_var = detail::read_vec(is);
    }
  }
  b.nap.mu = detail::read_vec(is);
  b.nap.v = detail::read_mat(is);
  b.nap.sigma = detail::read_vec(is);
  b.nap.sigma_inv = detail::read_vec(is);
  b.nap.kept_rank = read_pod<std::int32_t>(is);
  b.nap.covariance_convention = read_pod<std::uint8_t>(is) != 0;
  b.nap.n_rows = static_cast<Eigen::Index>(read_pod<std::int64_t>(is));
  if (read_pod<std::uint8_t>(is) != 0) b.nap.threshold = read_pod<double>(is);
  b.config_hash = read_pod<std::uint64_t>(is);
  b.manifest_hash = read_pod<std::uint64_t>(is);
  b.created_at = read_string(is);
  return b;
}

// Rebuilds a FusionOperator from persisted spec + weights (bit-exact).
inline FusionOperator restore_fusion(const ModelBundle& b) {
  FusionOperator op(b.fusion_spec);
  for (int m = 0; m < kNumModalities; ++m)
    op.mutable_weights(static_cast<Modality>(m)) = b.fusion_weights[m];
  return op;
}

}  // namespace slipnap
