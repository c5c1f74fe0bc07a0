#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <vector>

#include "slipnap/common.hpp"
#include "slipnap/types.hpp"

namespace slipnap {

// One 2-D convolution (valid, stride 1, zero bias) followed by non-overlapping
// average pooling. pool = 1 means no pooling.
struct Conv2dSpec {
  int in_ch = 1;
  int out_ch = 8;
  int kernel = 3;
  int pool = 2;
};

struct Conv1dSpec {
  int in_ch = 1;
  int out_ch = 8;
  int kernel = 3;
  int pool = 1;
};

// Fixed (never trained) multisensory integration. Weights are drawn once from
// uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) with std::mt19937_64; each modality
// stack uses a sub-seed derived from (seed, modality name), so a stack's
// weights do not depend on which other modalities are enabled.
struct FusionSpec {
  std::uint64_t seed = 42;
  int image_h = 32, image_w = 32;
  int mfcc_dim = 13;
  int ft_dim = 6;
  std::array<bool, kNumModalities> enabled = {true, true, true, true};

  std::vector<Conv2dSpec> rgb_stack = {{3, 8, 3, 3}, {8, 8, 3, 2}};
  std::vector<Conv2dSpec> depth_stack = {{1, 8, 3, 3}, {8, 8, 3, 2}};
  std::vector<Conv1dSpec> audio_stack = {{1, 16, 4, 1}};
  std::vector<Conv1dSpec> ft_stack = {{1, 24, 3, 1}};

  static int out_of_2d(int h, const Conv2dSpec& l) { return (h - l.kernel + 1) / l.pool; }
  static int out_of_1d(int n, const Conv1dSpec& l) { return (n - l.kernel + 1) / l.pool; }

  int embedding_dim(Modality m) const {
    switch (m) {
      case Modality::Rgb: {
        int h = image_h, w = image_w, c = 3;
        for (const auto& l : rgb_stack) { h = out_of_2d(h, l); w = out_of_2d(w, l); c = l.out_ch; }
        return h * w * c;
      }
      case Modality::Depth: {
        int h = image_h, w = image_w, c = 1;
        for (const auto& l : depth_stack) { h = out_of_2d(h, l); w = out_of_2d(w, l); c = l.out_ch; }
        return h * w * c;
      }
      case Modality::Audio: {
        int n = mfcc_dim, c = 1;
        for (const auto& l : audio_stack) { n = out_of_1d(n, l); c = l.out_ch; }
        return n * c;
      }
      case Modality::ForceTorque: {
        int n = ft_dim, c = 1;
        for (const auto& l : ft_stack) { n = out_of_1d(n, l); c = l.out_ch; }
        return n * c;
      }
    }
    return 0;
  }

  int output_dim() const {
    int d = 0;
    for (int m = 0; m < kNumModalities; ++m)
      if (enabled[static_cast<std::size_t>(m)]) d += embedding_dim(static_cast<Modality>(m));
    return d;
  }

  void validate() const {
    auto check2d = [](int h, int w, const std::vector<Conv2dSpec>& stack, const char* name) {
      int c = -1;
      for (const auto& l : stack) {
        if (c >= 0 && l.in_ch != c) throw ConfigError(std::string(name) + ": channel mismatch in stack");
        if (h < l.kernel || w < l.kernel) throw ConfigError(std::string(name) + ": kernel larger than input");
        h = out_of_2d(h, l);
        w = out_of_2d(w, l);
        if (h <= 0 || w <= 0) throw ConfigError(std::string(name) + ": stack collapses input to zero size");
        c = l.out_ch;
      }
    };
    auto check1d = [](int n, const std::vector<Conv1dSpec>& stack, const char* name) {
      int c = -1;
      for (const auto& l : stack) {
        if (c >= 0 && l.in_ch != c) throw ConfigError(std::string(name) + ": channel mismatch in stack");
        if (n < l.kernel) throw ConfigError(std::string(name) + ": kernel larger than input");
        n = out_of_1d(n, l);
        if (n <= 0) throw ConfigError(std::string(name) + ": stack collapses input to zero size");
        c = l.out_ch;
      }
    };
    check2d(image_h, image_w, rgb_stack, "rgb");
    check2d(image_h, image_w, depth_stack, "depth");
    check1d(mfcc_dim, audio_stack, "audio");
    check1d(ft_dim, ft_stack, "ft");
    if (rgb_stack.empty() || !(rgb_stack.front().in_ch == 3)) throw ConfigError("rgb stack must start with 3 channels");
    if (output_dim() <= 0) throw ConfigError("fusion output dimension is zero");
  }
};

namespace detail {

inline std::vector<double> draw_uniform(std::mt19937_64& rng, std::size_t n, double bound) {
  std::vector<double> w(n);
  for (auto& v : w) v = (2.0 * u64_to_unit_double(rng()) - 1.0) * bound;
  return w;
}

}  // namespace detail

class FusionOperator {
 public:
  explicit FusionOperator(const FusionSpec& spec) : spec_(spec) {
    spec.validate();
    for (const auto& l : spec.rgb_stack) rgb_w_.push_back(init_weights_2d(l, "rgb"));
    for (const auto& l : spec.depth_stack) depth_w_.push_back(init_weights_2d(l, "depth"));
    for (const auto& l : spec.audio_stack) audio_w_.push_back(init_weights_1d(l, "audio"));
    for (const auto& l : spec.ft_stack) ft_w_.push_back(init_weights_1d(l, "ft"));
    // sub-seeded streams are created lazily above in modality order
  }

  const FusionSpec& spec() const { return spec_; }

  // Raw weight access for serialization (layer-major, then (co, ci, ky, kx)).
  const std::vector<std::vector<double>>& weights(Modality m) const {
    switch (m) {
      case Modality::Rgb: return rgb_w_;
      case Modality::Depth: return depth_w_;
      case Modality::Audio: return audio_w_;
      default: return ft_w_;
    }
  }
  std::vector<std::vector<double>>& mutable_weights(Modality m) {
    return const_cast<std::vector<std::vector<double>>&>(weights(m));
  }

  Eigen::VectorXd embed_image(const Eigen::VectorXd& flat, int channels,
                              const std::vector<Conv2dSpec>& stack,
                              const std::vector<std::vector<double>>& weights,
                              const char* name) const {
    int h = spec_.image_h, w = spec_.image_w, c = channels;
    if (flat.size() != static_cast<Eigen::Index>(h) * w * c)
      throw DataError(std::string("fusion: ") + name + " tensor shape mismatch");
    std::vector<double> cur(flat.data(), flat.data() + flat.size());  // layout (c, y, x)
    for (std::size_t li = 0; li < stack.size(); ++li) {
      const auto& l = stack[li];
      int ho = h - l.kernel + 1, wo = w - l.kernel + 1;
      std::vector<double> conv(static_cast<std::size_t>(l.out_ch) * ho * wo, 0.0);
      const auto& wt = weights[li];
      for (int co = 0; co < l.out_ch; ++co)
        for (int y = 0; y < ho; ++y)
          for (int x = 0; x < wo; ++x) {
            double acc = 0.0;
            for (int ci = 0; ci < l.in_ch; ++ci)
              for (int ky = 0; ky < l.kernel; ++ky)
                for (int kx = 0; kx < l.kernel; ++kx)
                  acc += wt[idx4(co, ci, ky, kx, l)] *
                         cur[(static_cast<std::size_t>(ci) * h + (y + ky)) * w + (x + kx)];
            conv[(static_cast<std::size_t>(co) * ho + y) * wo + x] = acc;
          }
      int hp = ho / l.pool, wp = wo / l.pool;
      std::vector<double> pooled(static_cast<std::size_t>(l.out_ch) * hp * wp, 0.0);
      double inv = 1.0 / (l.pool * l.pool);
      for (int co = 0; co < l.out_ch; ++co)
        for (int y = 0; y < hp; ++y)
          for (int x = 0; x < wp; ++x) {
            double acc = 0.0;
            for (int py = 0; py < l.pool; ++py)
              for (int px = 0; px < l.pool; ++px)
                acc += conv[(static_cast<std::size_t>(co) * ho + (y * l.pool + py)) * wo + (x * l.pool + px)];
            pooled[(static_cast<std::size_t>(co) * hp + y) * wp + x] = acc * inv;
          }
      cur = std::move(pooled);
      h = hp;
      w = wp;
      c = l.out_ch;
    }
    return Eigen::Map<const Eigen::VectorXd>(cur.data(), static_cast<Eigen::Index>(cur.size()));
  }

  Eigen::VectorXd embed_signal(const Eigen::VectorXd& flat, const std::vector<Conv1dSpec>& stack,
                               const std::vector<std::vector<double>>& weights,
                               const char* name, int expected_len) const {
    if (flat.size() != expected_len)
      throw DataError(std::string("fusion: ") + name + " tensor shape mismatch");
    int n = expected_len;
    std::vector<double> cur(flat.data(), flat.data() + flat.size());
    for (std::size_t li = 0; li < stack.size(); ++li) {
      const auto& l = stack[li];
      int no = n - l.kernel + 1;
      std::vector<double> conv(static_cast<std::size_t>(l.out_ch) * no, 0.0);
      const auto& wt = weights[li];
      for (int co = 0; co < l.out_ch; ++co)
        for (int x = 0; x < no; ++x) {
          double acc = 0.0;
          for (int ci = 0; ci < l.in_ch; ++ci)
            for (int k = 0; k < l.kernel; ++k)
              acc += wt[(static_cast<std::size_t>(co) * l.in_ch + ci) * l.kernel + k] *
                     cur[static_cast<std::size_t>(ci) * n + (x + k)];
          conv[static_cast<std::size_t>(co) * no + x] = acc;
        }
      int np = no / l.pool;
      std::vector<double> pooled(static_cast<std::size_t>(l.out_ch) * np, 0.0);
      for (int co = 0; co < l.out_ch; ++co)
        for (int x = 0; x < np; ++x) {
          double acc = 0.0;
          for (int p = 0; p < l.pool; ++p) acc += conv[static_cast<std::size_t>(co) * no + (x * l.pool + p)];
          pooled[static_cast<std::size_t>(co) * np + x] = acc / l.pool;
        }
      cur = std::move(pooled);
      n = np;
    }
    return Eigen::Map<const Eigen::VectorXd>(cur.data(), static_cast<Eigen::Index>(cur.size()));
  }

  // Concatenation order is fixed: Rgb | Depth | Audio | ForceTorque.
  FusedVector fuse(const SyncedSample& s) const {
    FusedVector out;
    out.tick_time = s.tick_time;
    out.label = s.label;
    out.values.resize(spec_.output_dim());
    Eigen::Index off = 0;
    auto put = [&](const Eigen::VectorXd& v) {
      out.values.segment(off, v.size()) = v;
      off += v.size();
    };
    if (spec_.enabled[static_cast<std::size_t>(Modality::Rgb)])
      put(embed_image(s.rgb, 3, spec_.rgb_stack, rgb_w_, "rgb"));
    if (spec_.enabled[static_cast<std::size_t>(Modality::Depth)])
      put(embed_image(s.depth, 1, spec_.depth_stack, depth_w_, "depth"));
    if (spec_.enabled[static_cast<std::size_t>(Modality::Audio)])
      put(embed_signal(s.mfcc, spec_.audio_stack, audio_w_, "audio", spec_.mfcc_dim));
    if (spec_.enabled[static_cast<std::size_t>(Modality::ForceTorque)])
      put(embed_signal(s.ft, spec_.ft_stack, ft_w_, "ft", spec_.ft_dim));
    return out;
  }

 private:
  static std::size_t idx4(int co, int ci, int ky, int kx, const Conv2dSpec& l) {
    return ((static_cast<std::size_t>(co) * l.in_ch + ci) * l.kernel + ky) * l.kernel + kx;
  }

  std::vector<double> init_weights_2d(const Conv2dSpec& l, const char* name) {
    auto& rng = stream(name);
    double bound = 1.0 / std::sqrt(static_cast<double>(l.in_ch) * l.kernel * l.kernel);
    return detail::draw_uniform(rng, static_cast<std::size_t>(l.out_ch) * l.in_ch * l.kernel * l.kernel, bound);
  }

  std::vector<double> init_weights_1d(const Conv1dSpec& l, const char* name) {
    auto& rng = stream(name);
    double bound = 1.0 / std::sqrt(static_cast<double>(l.in_ch) * l.kernel);
    return detail::draw_uniform(rng, static_cast<std::size_t>(l.out_ch) * l.in_ch * l.kernel, bound);
  }

  std::mt19937_64& stream(const std::string& name) {
    auto it = streams_.find(name);
    if (it == streams_.end())
      it = streams_.emplace(name, std::mt19937_64(derive_seed(spec_.seed, "fusion/" + name))).first;
    return it->second;
  }

  FusionSpec spec_;
  std::map<std::string, std::mt19937_64> streams_;
  std::vector<std::vector<double>> rgb_w_, depth_w_, audio_w_, ft_w_;
};

inline FusionOperator build_fusion(const FusionSpec& spec) { return FusionOperator(spec); }

}  // namespace slipnap
