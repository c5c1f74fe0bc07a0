// Test-only independent oracles. These deliberately avoid the library's
// implementation paths: hand-rolled Jacobi SVD, loop-based dense/conv math,
// finite differences and O(n^2) pair counting.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "slipnap/autoencoder.hpp"
#include "slipnap/fusion.hpp"
#include "slipnap/types.hpp"

namespace oracle {

// One-sided Jacobi SVD: returns singular values (descending) and V.
inline void jacobi_svd(const Eigen::MatrixXd& a, Eigen::VectorXd* sigma, Eigen::MatrixXd* v_out) {
  Eigen::MatrixXd b = a;
  const Eigen::Index n = a.cols();
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
  for (int sweep = 0; sweep < 60; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        double alpha = b.col(p).squaredNorm();
        double beta = b.col(q).squaredNorm();
        double gamma = b.col(p).dot(b.col(q));
        off = std::max(off, std::abs(gamma) / std::max(1e-300, std::sqrt(alpha * beta)));
        if (std::abs(gamma) < 1e-15 * std::sqrt(alpha * beta)) continue;
        double zeta = (beta - alpha) / (2.0 * gamma);
        double t = ((zeta >= 0) ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        double c = 1.0 / std::sqrt(1.0 + t * t);
        double s = c * t;
        Eigen::VectorXd bp = b.col(p);
        b.col(p) = c * bp - s * b.col(q);
        b.col(q) = s * bp + c * b.col(q);
        Eigen::VectorXd vp = v.col(p);
        v.col(p) = c * vp - s * v.col(q);
        v.col(q) = s * vp + c * v.col(q);
      }
    }
    if (off < 1e-14) break;
  }
  Eigen::VectorXd sv(n);
  for (Eigen::Index i = 0; i < n; ++i) sv[i] = b.col(i).norm();
  // sort descending, permuting V accordingly
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::sort(order.begin(), order.end(), [&](Eigen::Index x, Eigen::Index y) { return sv[x] > sv[y]; });
  Eigen::VectorXd sv_sorted(n);
  Eigen::MatrixXd v_sorted(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    sv_sorted[i] = sv[order[static_cast<std::size_t>(i)]];
    v_sorted.col(i) = v.col(order[static_cast<std::size_t>(i)]);
  }
  if (sigma) *sigma = sv_sorted;
  if (v_out) *v_out = v_sorted;
}

// Brute-force NAP score: explicit centering, Jacobi SVD, explicit projection.
inline std::vector<double> nap_scores(const Eigen::MatrixXd& d_rows,
                                      const Eigen::MatrixXd& queries, double trunc_rel = 1e-6) {
  const Eigen::Index n = d_rows.rows(), w = d_rows.cols();
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(w);
  for (Eigen::Index i = 0; i < n; ++i) mu += d_rows.row(i).transpose();
  mu /= static_cast<double>(n);
  Eigen::MatrixXd centered(n, w);
  for (Eigen::Index i = 0; i < n; ++i) centered.row(i) = d_rows.row(i) - mu.transpose();
  Eigen::VectorXd sigma;
  Eigen::MatrixXd v;
  jacobi_svd(centered, &sigma, &v);
  double cutoff = trunc_rel * sigma[0];
  std::vector<double> out;
  for (Eigen::Index qi = 0; qi < queries.rows(); ++qi) {
    Eigen::VectorXd dq = queries.row(qi).transpose() - mu;
    double score = 0.0;
    for (Eigen::Index j = 0; j < sigma.size(); ++j) {
      if (!(sigma[j] > cutoff && sigma[j] > 0.0)) continue;
      double proj = 0.0;
      for (Eigen::Index k = 0; k < w; ++k) proj += dq[k] * v(k, j);
      proj /= sigma[j];
      score += proj * proj;
    }
    out.push_back(score);
  }
  return out;
}

// Eval-mode dense autoencoder forward with explicit loops.
inline Eigen::VectorXd dense_forward(const slipnap::AeModel& model, const Eigen::VectorXd& x,
                                     std::vector<Eigen::VectorXd>* hidden = nullptr) {
  const auto& arch = model.arch();
  Eigen::VectorXd a = x;
  const int n_layers = static_cast<int>(model.layers().size());
  for (int li = 0; li < n_layers; ++li) {
    const auto& l = model.layers()[static_cast<std::size_t>(li)];
    Eigen::VectorXd z(l.w.rows());
    for (Eigen::Index r = 0; r < l.w.rows(); ++r) {
      double acc = l.b[r];
      for (Eigen::Index c = 0; c < l.w.cols(); ++c) acc += l.w(r, c) * a[c];
      z[r] = acc;
    }
    if (l.normalized) {
      for (Eigen::Index r = 0; r < z.size(); ++r) {
        double zn = (z[r] - l.running_mean[r]) / std::sqrt(l.running_var[r] + arch.bn_eps);
        z[r] = l.gamma[r] * zn + l.beta[r];
      }
      for (Eigen::Index r = 0; r < z.size(); ++r)
        if (z[r] < 0) z[r] *= arch.leaky_slope;
    } else if (!arch.use_batch_norm && li != n_layers - 1) {
      for (Eigen::Index r = 0; r < z.size(); ++r)
        if (z[r] < 0) z[r] *= arch.leaky_slope;
    }
    a = z;
    if (hidden && li < arch.depth()) hidden->push_back(a);
  }
  return a;
}

// Direct convolution oracle for the fusion operator, accumulating in a
// different loop order than the implementation.
inline Eigen::VectorXd fuse(const slipnap::FusionOperator& op, const slipnap::SyncedSample& s) {
  using namespace slipnap;
  const auto& spec = op.spec();
  std::vector<double> out;

  auto image = [&](const Eigen::VectorXd& flat, int channels, const std::vector<Conv2dSpec>& stack,
                   const std::vector<std::vector<double>>& weights) {
    int h = spec.image_h, w = spec.image_w;
    std::vector<double> cur(flat.data(), flat.data() + flat.size());
    int c = channels;
    for (std::size_t li = 0; li < stack.size(); ++li) {
      const auto& l = stack[li];
      int ho = h - l.kernel + 1, wo = w - l.kernel + 1;
      std::vector<double> conv(static_cast<std::size_t>(l.out_ch) * ho * wo, 0.0);
      for (int ci = 0; ci < l.in_ch; ++ci)
        for (int ky = 0; ky < l.kernel; ++ky)
          for (int kx = 0; kx < l.kernel; ++kx)
            for (int co = 0; co < l.out_ch; ++co) {
              double wt = weights[li][((static_cast<std::size_t>(co) * l.in_ch + ci) * l.kernel + ky) *
                                         static_cast<std::size_t>(l.kernel) +
                                     kx];
              for (int y = 0; y < ho; ++y)
                for (int x = 0; x < wo; ++x)
                  conv[(static_cast<std::size_t>(co) * ho + y) * wo + x] +=
                      wt * cur[(static_cast<std::size_t>(ci) * h + y + ky) * w + x + kx];
            }
      int hp = ho / l.pool, wp = wo / l.pool;
      std::vector<double> pooled(static_cast<std::size_t>(l.out_ch) * hp * wp, 0.0);
      for (int co = 0; co < l.out_ch; ++co)
        for (int y = 0; y < hp * l.pool; ++y)
          for (int x = 0; x < wp * l.pool; ++x)
            pooled[(static_cast<std::size_t>(co) * hp + y / l.pool) * wp + x / l.pool] +=
                conv[(static_cast<std::size_t>(co) * ho + y) * wo + x] / (l.pool * l.pool);
      cur = std::move(pooled);
      h = hp;
      w = wp;
      c = l.out_ch;
    }
    (void)c;
    out.insert(out.end(), cur.begin(), cur.end());
  };

  auto signal = [&](const Eigen::VectorXd& flat, const std::vector<Conv1dSpec>& stack,
                    const std::vector<std::vector<double>>& weights) {
    int n = static_cast<int>(flat.size());
    std::vector<double> cur(flat.data(), flat.data() + flat.size());
    for (std::size_t li = 0; li < stack.size(); ++li) {
      const auto& l = stack[li];
      int no = n - l.kernel + 1;
      std::vector<double> conv(static_cast<std::size_t>(l.out_ch) * no, 0.0);
      for (int ci = 0; ci < l.in_ch; ++ci)
        for (int k = 0; k < l.kernel; ++k)
          for (int co = 0; co < l.out_ch; ++co)
            for (int x = 0; x < no; ++x)
              conv[static_cast<std::size_t>(co) * no + x] +=
                  weights[li][(static_cast<std::size_t>(co) * l.in_ch + ci) * l.kernel + k] *
                  cur[static_cast<std::size_t>(ci) * n + x + k];
      int np = no / l.pool;
      std::vector<double> pooled(static_cast<std::size_t>(l.out_ch) * np, 0.0);
      for (int co = 0; co < l.out_ch; ++co)
        for (int x = 0; x < np * l.pool; ++x)
          pooled[static_cast<std::size_t>(co) * np + x / l.pool] +=
              conv[static_cast<std::size_t>(co) * no + x] / l.pool;
      cur = std::move(pooled);
      n = np;
    }
    out.insert(out.end(), cur.begin(), cur.end());
  };

  if (spec.enabled[static_cast<std::size_t>(Modality::Rgb)])
    image(s.rgb, 3, spec.rgb_stack, op.weights(Modality::Rgb));
  if (spec.enabled[static_cast<std::size_t>(Modality::Depth)])
    image(s.depth, 1, spec.depth_stack, op.weights(Modality::Depth));
  if (spec.enabled[static_cast<std::size_t>(Modality::Audio)])
    signal(s.mfcc, spec.audio_stack, op.weights(Modality::Audio));
  if (spec.enabled[static_cast<std::size_t>(Modality::ForceTorque)])
    signal(s.ft, spec.ft_stack, op.weights(Modality::ForceTorque));

  return Eigen::Map<const Eigen::VectorXd>(out.data(), static_cast<Eigen::Index>(out.size()));
}

// O(P*N) pair-counting AUROC with half credit for ties.
inline double pair_auroc(const std::vector<double>& scores, const std::vector<slipnap::Label>& labels) {
  double win = 0.0;
  long p = 0, n = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != slipnap::Label::Abnormal) continue;
    ++p;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] == slipnap::Label::Abnormal) continue;
      if (scores[i] > scores[j]) win += 1.0;
      else if (scores[i] == scores[j]) win += 0.5;
    }
  }
  for (auto l : labels)
    if (l == slipnap::Label::Normal) ++n;
  return win / (static_cast<double>(p) * static_cast<double>(n));
}

// Central finite differences of f at x.
template <typename F>
Eigen::VectorXd finite_difference(F&& f, const Eigen::VectorXd& x, double step = 1e-4) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    double v = x[i];
    xp[i] = v + step;
    double fp = f(xp);
    xp[i] = v - step;
    double fm = f(xp);
    xp[i] = v;
    g[i] = (fp - fm) / (2.0 * step);
  }
  return g;
}

}  // namespace oracle
