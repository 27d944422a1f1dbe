#pragma once

// Brute-force references for the ranking and span metrics.

#include <algorithm>
#include <functional>
#include <iterator>
#include <set>
#include <vector>

#include "raft/metrics/metrics.hpp"
#include "raft/numerics/rng.hpp"

namespace raft::testing {

using metrics::Mask;
using metrics::Span;

// Precision/recall at every distinct threshold, summed as step-wise area.
inline double brute_force_ap(const std::vector<double>& scores, const Mask& gold) {
  std::vector<double> thresholds(scores.begin(), scores.end());
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  std::size_t positives = 0;
  for (auto g : gold) positives += g;
  double area = 0, prev_recall = 0;
  for (double t : thresholds) {
    std::size_t tp = 0, selected = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= t) {
        ++selected;
        tp += gold[i];
      }
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(positives);
    area += (recall - prev_recall) * static_cast<double>(tp) / static_cast<double>(selected);
    prev_recall = recall;
  }
  return area;
}

// Precision at each gold position in (score desc, index asc) order.
inline double ranked_ap(const std::vector<double>& scores, const Mask& gold) {
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double total = 0;
  std::size_t tp = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (!gold[order[r]]) continue;
    ++tp;
    total += static_cast<double>(tp) / static_cast<double>(r + 1);
  }
  return total / static_cast<double>(tp);
}

inline std::set<std::size_t> cover(const Span& s) {
  std::set<std::size_t> out;
  for (auto i = s.start; i < s.end; ++i) out.insert(i);
  return out;
}

inline double set_iou(const Span& a, const Span& b) {
  const auto x = cover(a), y = cover(b);
  std::vector<std::size_t> inter, uni;
  std::set_intersection(x.begin(), x.end(), y.begin(), y.end(), std::back_inserter(inter));
  std::set_union(x.begin(), x.end(), y.begin(), y.end(), std::back_inserter(uni));
  return static_cast<double>(inter.size()) / static_cast<double>(uni.size());
}

inline double exhaustive_iou_f1(const std::vector<Span>& pred, const std::vector<Span>& gold) {
  if (pred.empty() && gold.empty()) return 1.0;
  double pm = 0, gm = 0;
  for (const auto& p : pred) {
    bool hit = false;
    for (const auto& g : gold) hit = hit || set_iou(p, g) >= 0.5;
    pm += hit;
  }
  for (const auto& g : gold) {
    bool hit = false;
    for (const auto& p : pred) hit = hit || set_iou(p, g) >= 0.5;
    gm += hit;
  }
  const double prec = pred.empty() ? 0 : pm / static_cast<double>(pred.size());
  const double rec = gold.empty() ? 0 : gm / static_cast<double>(gold.size());
  return prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
}

inline std::vector<Span> random_spans(Rng& rng, std::size_t max_spans) {
  std::vector<Span> out;
  std::size_t pos = 0;
  const std::size_t n = rng.index(max_spans + 1);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t start = pos + rng.index(3);
    const std::size_t end = start + 1 + rng.index(4);
    out.push_back({start, end});
    pos = end;
  }
  return out;
}

}  // namespace raft::testing
