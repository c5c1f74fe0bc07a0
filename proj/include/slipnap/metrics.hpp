#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "slipnap/common.hpp"
#include "slipnap/types.hpp"

namespace slipnap {

struct MetricError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RocPoint {
  double fpr = 0.0, tpr = 0.0;
};
struct PrcPoint {
  double recall = 0.0, precision = 0.0;
};

struct EvalReport {
  double auroc = 0.0, auprc = 0.0, f1 = 0.0;
  std::vector<RocPoint> roc_points;
  std::vector<PrcPoint> prc_points;
  std::vector<double> normal_scores, abnormal_scores;
  long positives = 0, negatives = 0;
};

namespace detail {

struct SortedScores {
  // descending by score, with tie groups collapsed
  std::vector<double> score;  // group score
  std::vector<long> tp, fp;   // cumulative counts at and above this group
  long p = 0, n = 0;
};

inline SortedScores group_by_score(const std::vector<double>& scores,
                                   const std::vector<Label>& labels) {
  if (scores.size() != labels.size()) throw MetricError("scores/labels size mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  SortedScores out;
  long tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      if (labels[order[i]] == Label::Abnormal) ++tp; else ++fp;
      ++i;
    }
    out.score.push_back(s);
    out.tp.push_back(tp);
    out.fp.push_back(fp);
  }
  out.p = tp;
  out.n = fp;
  return out;
}

}  // namespace detail

// ROC curve from (0,0) to (1,1); ties form diagonal segments.
inline std::vector<RocPoint> roc_curve(const std::vector<double>& scores,
                                       const std::vector<Label>& labels) {
  auto g = detail::group_by_score(scores, labels);
  if (g.p == 0 || g.n == 0) throw MetricError("roc: need at least one sample of each class");
  std::vector<RocPoint> pts;
  pts.push_back({0.0, 0.0});
  for (std::size_t i = 0; i < g.score.size(); ++i)
    pts.push_back({static_cast<double>(g.fp[i]) / g.n, static_cast<double>(g.tp[i]) / g.p});
  return pts;
}

// Trapezoidal integral of the ROC curve.
inline double auroc_trapezoid(const std::vector<double>& scores, const std::vector<Label>& labels) {
  auto pts = roc_curve(scores, labels);
  double area = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i)
    area += (pts[i].fpr - pts[i - 1].fpr) * 0.5 * (pts[i].tpr + pts[i - 1].tpr);
  return area;
}

// Mann-Whitney statistic: P(score_A > score_N) + 0.5 * P(tie), by sorting.
inline double auroc(const std::vector<double>& scores, const std::vector<Label>& labels) {
  auto g = detail::group_by_score(scores, labels);
  if (g.p == 0 || g.n == 0) throw MetricError("auroc: need at least one sample of each class");
  double win = 0.0;
  long tp_prev = 0, fp_prev = 0;
  for (std::size_t i = 0; i < g.score.size(); ++i) {
    long dtp = g.tp[i] - tp_prev, dfp = g.fp[i] - fp_prev;
    // abnormal in this group beat every normal strictly below, tie within group
    long n_below = g.n - g.fp[i];
    win += static_cast<double>(dtp) * n_below + 0.5 * static_cast<double>(dtp) * dfp;
    tp_prev = g.tp[i];
    fp_prev = g.fp[i];
  }
  return win / (static_cast<double>(g.p) * static_cast<double>(g.n));
}

inline std::vector<PrcPoint> prc_curve(const std::vector<double>& scores,
                                       const std::vector<Label>& labels) {
  auto g = detail::group_by_score(scores, labels);
  if (g.p == 0) throw MetricError("auprc: no positive samples");
  std::vector<PrcPoint> pts;
  for (std::size_t i = 0; i < g.score.size(); ++i) {
    double recall = static_cast<double>(g.tp[i]) / g.p;
    double precision = static_cast<double>(g.tp[i]) / (g.tp[i] + g.fp[i]);
    pts.push_back({recall, precision});
  }
  return pts;
}

// Step integration: precision at each achieved recall level, rightward.
inline double auprc(const std::vector<double>& scores, const std::vector<Label>& labels) {
  auto pts = prc_curve(scores, labels);
  double area = 0.0, prev_recall = 0.0;
  for (const auto& pt : pts) {
    area += (pt.recall - prev_recall) * pt.precision;
    prev_recall = pt.recall;
  }
  return area;
}

// F1 with Abnormal as the positive class; predicted positive iff score > threshold.
inline double f1_at_threshold(const std::vector<double>& scores, const std::vector<Label>& labels,
                              double threshold) {
  if (scores.size() != labels.size()) throw MetricError("scores/labels size mismatch");
  long tp = 0, fp = 0, fn = 0;
  bool has_pos = false, has_neg = false;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    bool truth = labels[i] == Label::Abnormal;
    bool pred = scores[i] > threshold;
    has_pos |= truth;
    has_neg |= !truth;
    if (pred && truth) ++tp;
    else if (pred && !truth) ++fp;
    else if (!pred && truth) ++fn;
  }
  if (!has_pos || !has_neg) throw MetricError("f1: need at least one sample of each class");
  double denom = 2.0 * tp + fp + fn;
  return denom == 0.0 ? 0.0 : 2.0 * tp / denom;
}

inline EvalReport make_report(const std::vector<double>& scores, const std::vector<Label>& labels,
                              std::optional<double> threshold = std::nullopt) {
  EvalReport r;
  r.auroc = auroc(scores, labels);
  r.auprc = auprc(scores, labels);
  r.roc_points = roc_curve(scores, labels);
  r.prc_points = prc_curve(scores, labels);
  if (threshold) r.f1 = f1_at_threshold(scores, labels, *threshold);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] == Label::Abnormal) {
      r.abnormal_scores.push_back(scores[i]);
      ++r.positives;
    } else {
      r.normal_scores.push_back(scores[i]);
      ++r.negatives;
    }
  }
  return r;
}

// Grouped reports, keyed by caller-provided group names (condition, object,
// modality mask, ...). Metric failures carry the group name.
inline std::map<std::string, EvalReport> report_by_group(
    const std::vector<std::string>& groups, const std::vector<double>& scores,
    const std::vector<Label>& labels, std::optional<double> threshold = std::nullopt) {
  std::map<std::string, std::pair<std::vector<double>, std::vector<Label>>> buckets;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    buckets[groups[i]].first.push_back(scores[i]);
    buckets[groups[i]].second.push_back(labels[i]);
  }
  std::map<std::string, EvalReport> out;
  for (auto& [name, data] : buckets) {
    try {
      out[name] = make_report(data.first, data.second, threshold);
    } catch (const MetricError& e) {
      throw MetricError("group '" + name + "': " + e.what());
    }
  }
  return out;
}

// Fixed-precision decimal formatting so reruns produce identical bytes.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string roc_csv(const EvalReport& r) {
  std::string s = "fpr,tpr\n";
  for (const auto& p : r.roc_points) s += format_double(p.fpr) + "," + format_double(p.tpr) + "\n";
  return s;
}

inline std::string prc_csv(const EvalReport& r) {
  std::string s = "recall,precision\n";
  for (const auto& p : r.prc_points)
    s += format_double(p.recall) + "," + format_double(p.precision) + "\n";
  return s;
}

}  // namespace slipnap
