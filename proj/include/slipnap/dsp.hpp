#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "slipnap/common.hpp"

namespace slipnap {

struct MfccConfig {
  double sample_rate = 16000.0;
  double frame_len = 0.1;  // seconds, one frame per sync tick
  int n_fft = 2048;        // power of two >= frame samples
  int n_mels = 26;
  int n_mfcc = 13;
  double fmin = 0.0;
  double fmax = 8000.0;  // defaults to Nyquist for 16 kHz
  double log_floor = 1e-10;
  bool pre_emphasis = false;
  double pre_emphasis_coeff = 0.97;

  int frame_samples() const { return static_cast<int>(std::lround(frame_len * sample_rate)); }

  void validate() const {
    if (n_mfcc > n_mels) throw ConfigError("mfcc: n_mfcc must not exceed n_mels");
    if (fmax > sample_rate / 2.0 + 1e-9) throw ConfigError("mfcc: fmax above Nyquist");
    if (!(log_floor > 0)) throw ConfigError("mfcc: log_floor must be positive");
    if (n_fft < frame_samples()) throw ConfigError("mfcc: n_fft smaller than frame");
    if ((n_fft & (n_fft - 1)) != 0 || n_fft <= 0) throw ConfigError("mfcc: n_fft must be a power of two");
  }
};

struct MfccVector {
  Eigen::VectorXd coefficients;
  double tick_time = 0.0;
};

inline double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
inline double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

// In-place iterative radix-2 FFT; size must be a power of two.
inline void fft_radix2(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0) throw ConfigError("fft: size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        auto u = a[i + k];
        auto v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

// Triangular mel filterbank, n_mels x (n_fft/2 + 1). Filter centers are
// equally spaced on the mel scale between fmin and fmax.
inline Eigen::MatrixXd mel_filterbank(const MfccConfig& cfg) {
  cfg.validate();
  const int n_bins = cfg.n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(cfg.fmin);
  const double mel_hi = hz_to_mel(cfg.fmax);

  std::vector<double> edges(cfg.n_mels + 2);
  for (int i = 0; i < cfg.n_mels + 2; ++i)
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (cfg.n_mels + 1));

  Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(cfg.n_mels, n_bins);
  for (int m = 0; m < cfg.n_mels; ++m) {
    double fl = edges[m], fc = edges[m + 1], fr = edges[m + 2];
    for (int b = 0; b < n_bins; ++b) {
      double f = static_cast<double>(b) * cfg.sample_rate / cfg.n_fft;
      if (f > fl && f < fc)
        fb(m, b) = (f - fl) / (fc - fl);
      else if (f >= fc && f < fr)
        fb(m, b) = (fr - f) / (fr - fc);
    }
    if (fb.row(m).sum() <= 0.0)
      throw ConfigError("mel_filterbank: empty filter row; n_mels too large for n_fft resolution");
  }
  return fb;
}

// Orthonormal DCT-II matrix, n_out x n_in.
inline Eigen::MatrixXd dct2_orthonormal(int n_out, int n_in) {
  Eigen::MatrixXd d(n_out, n_in);
  for (int k = 0; k < n_out; ++k) {
    double scale = (k == 0) ? std::sqrt(1.0 / n_in) : std::sqrt(2.0 / n_in);
    for (int n = 0; n < n_in; ++n)
      d(k, n) = scale * std::cos(std::numbers::pi * (2.0 * n + 1.0) * k / (2.0 * n_in));
  }
  return d;
}

// Stateless MFCC extractor: Hamming window -> |FFT|^2 -> mel filterbank ->
// floored log -> orthonormal DCT-II -> first n_mfcc coefficients.
class MfccExtractor {
 public:
  explicit MfccExtractor(const MfccConfig& cfg)
      : cfg_(cfg), filterbank_(mel_filterbank(cfg)), dct_(dct2_orthonormal(cfg.n_mfcc, cfg.n_mels)) {
    const int n = cfg_.frame_samples();
    window_.resize(n);
    for (int i = 0; i < n; ++i)
      window_[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / (n - 1));
  }

  const MfccConfig& config() const { return cfg_; }
  const Eigen::MatrixXd& filterbank() const { return filterbank_; }

  Eigen::VectorXd log_mel_energies(const Eigen::VectorXd& frame) const {
    if (frame.size() == 0) throw DataError("mfcc: empty frame");
    const int n = cfg_.frame_samples();
    std::vector<std::complex<double>> buf(static_cast<std::size_t>(cfg_.n_fft), {0.0, 0.0});
    // short tail frames zero-pad
    const int m = std::min<int>(n, static_cast<int>(frame.size()));
    for (int i = 0; i < m; ++i) {
      double x = frame[i];
      if (cfg_.pre_emphasis && i > 0) x -= cfg_.pre_emphasis_coeff * frame[i - 1];
      buf[static_cast<std::size_t>(i)] = x * window_[static_cast<std::size_t>(i)];
    }
    fft_radix2(buf);
    const int n_bins = cfg_.n_fft / 2 + 1;
    Eigen::VectorXd power(n_bins);
    for (int b = 0; b < n_bins; ++b) power[b] = std::norm(buf[static_cast<std::size_t>(b)]);
    Eigen::VectorXd mel = filterbank_ * power;
    for (int i = 0; i < mel.size(); ++i) mel[i] = std::log(std::max(mel[i], cfg_.log_floor));
    return mel;
  }

  MfccVector extract(const Eigen::VectorXd& frame, double tick_time = 0.0) const {
    MfccVector out;
    out.tick_time = tick_time;
    out.coefficients = dct_ * log_mel_energies(frame);
    return out;
  }

 private:
  MfccConfig cfg_;
  Eigen::MatrixXd filterbank_;
  Eigen::MatrixXd dct_;
  std::vector<double> window_;
};

}  // namespace slipnap
