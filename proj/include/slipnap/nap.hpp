#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "slipnap/common.hpp"
#include "slipnap/types.hpp"

namespace slipnap {

// Whitened pathway-error scorer. Fitted on the matrix D whose rows are the
// training-set pathway errors d(s); scoring projects a centered query onto the
// right singular vectors and divides by the singular values.
struct NapModel {
  Eigen::VectorXd mu;         // column-wise mean of D
  Eigen::MatrixXd v;          // right singular vectors (cols = kept + truncated)
  Eigen::VectorXd sigma;      // singular values, pre-inversion
  Eigen::VectorXd sigma_inv;  // reciprocal singular values; truncated -> 0
  int kept_rank = 0;
  std::optional<double> threshold;
  // When set, whitening uses the population-covariance convention: sigma_inv
  // is scaled by sqrt(n_rows), so training projections have variance 1/n
  // replaced by 1 per kept dimension.
  bool covariance_convention = false;
  Eigen::Index n_rows = 0;

  double score(const Eigen::VectorXd& d) const {
    if (d.size() != mu.size()) throw DataError("nap: query width does not match model");
    Eigen::VectorXd proj = (v.transpose() * (d - mu)).cwiseProduct(sigma_inv);
    return proj.squaredNorm();
  }

  Eigen::VectorXd score_rows(const Eigen::MatrixXd& d_rows) const {
    if (d_rows.cols() != mu.size()) throw DataError("nap: query width does not match model");
    Eigen::MatrixXd proj = ((d_rows.rowwise() - mu.transpose()) * v).array().rowwise() *
                           sigma_inv.transpose().array();
    return proj.rowwise().squaredNorm();
  }

  Label classify(double s) const {
    if (!threshold) throw ConfigError("nap: model has no threshold");
    return s > *threshold ? Label::Abnormal : Label::Normal;
  }
};

// Relative truncation threshold for near-zero singular values.
inline constexpr double kNapTruncationRel = 1e-6;

inline NapModel nap_fit(const Eigen::MatrixXd& d_rows, bool covariance_convention = false) {
  if (d_rows.rows() < 2) throw DataError("nap: need at least 2 training rows");
  if (!d_rows.allFinite()) throw DataError("nap: non-finite entries in training matrix");

  NapModel m;
  m.n_rows = d_rows.rows();
  m.covariance_convention = covariance_convention;
  m.mu = d_rows.colwise().mean();
  Eigen::MatrixXd centered = d_rows.rowwise() - m.mu.transpose();

  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  m.v = svd.matrixV();
  m.sigma = svd.singularValues();

  const double cutoff = kNapTruncationRel * (m.sigma.size() > 0 ? m.sigma[0] : 0.0);
  m.sigma_inv = Eigen::VectorXd::Zero(m.sigma.size());
  m.kept_rank = 0;
  const double scale = covariance_convention ? std::sqrt(static_cast<double>(m.n_rows)) : 1.0;
  for (Eigen::Index i = 0; i < m.sigma.size(); ++i) {
    if (m.sigma[i] > cutoff && m.sigma[i] > 0.0) {
      m.sigma_inv[i] = scale / m.sigma[i];
      ++m.kept_rank;
    }
  }
  return m;
}

// Empirical q-quantile with linear interpolation between order statistics.
inline double fit_threshold(std::vector<double> scores, double q = 0.9) {
  if (scores.empty()) throw DataError("fit_threshold: empty score sequence");
  if (!(q >= 0.0 && q <= 1.0)) throw ConfigError("fit_threshold: quantile outside [0,1]");
  std::sort(scores.begin(), scores.end());
  const double h = q * static_cast<double>(scores.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, scores.size() - 1);
  const double frac = h - std::floor(h);
  return scores[lo] + frac * (scores[hi] - scores[lo]);
}

// Ablation baseline: plain input-space reconstruction error.
inline double reconstruction_score(const Eigen::VectorXd& x, const Eigen::VectorXd& x_hat) {
  return (x - x_hat).squaredNorm();
}

}  // namespace slipnap
