#pragma once

// Brute-force reference for keypoint AP: every injective partial assignment
// of predictions to ground truth is enumerated and the unique one that is
// stable under greedy score-ordered matching is kept.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <stdexcept>
#include <vector>

#include "dpit/metrics.hpp"

namespace oracle {

inline dpit::GtInstance random_gt(std::mt19937_64& rng, std::int64_t image_id, std::int64_t id, double cx = 200,
                                  double cy = 200) {
  std::uniform_real_distribution<double> area(2000, 8000), u(-0.5, 0.5), p(0, 1);
  dpit::GtInstance g;
  g.image_id = image_id;
  g.id = id;
  g.area = area(rng);
  const double s = std::sqrt(g.area);
  for (int j = 0; j < 17; ++j) {
    const double r = p(rng);
    if (r < 0.1) {
      g.keypoints.push_back({0, 0, 0});
    } else {
      g.keypoints.push_back({cx + s * u(rng), cy + s * u(rng), r < 0.3 ? 1 : 2});
    }
  }
  g.keypoints[0].v = 2;
  if (g.keypoints[0].x == 0) g.keypoints[0] = {cx, cy, 2};
  return g;
}

inline std::vector<dpit::Point2> noisy(std::mt19937_64& rng, const dpit::GtInstance& g, double sd) {
  std::normal_distribution<double> n(0, sd);
  std::vector<dpit::Point2> out;
  for (const auto& k : g.keypoints) out.push_back({k.x + n(rng), k.y + n(rng)});
  return out;
}

struct Pair {
  dpit::GtInstance gt;
  dpit::PredInstance pred;
};

/// Five visible joints, four exact and one hopelessly far: OKS = 4 / 5.
inline Pair oks_point_eight_fixture() {
  Pair f;
  f.gt = {1, 1, std::vector<dpit::Keypoint>(17, {0, 0, 0}), 4000, 0};
  for (int j = 0; j < 5; ++j) f.gt.keypoints[j] = {100.0 + 10 * j, 150.0 - 5 * j, 2};
  f.pred = {1, -1, {}, 0.9};
  for (const auto& k : f.gt.keypoints) f.pred.keypoints.push_back({k.x, k.y});
  f.pred.keypoints[4].x += 1e6;
  return f;
}

struct Scene {
  std::vector<dpit::GtInstance> gts;
  std::vector<dpit::PredInstance> preds;
};

/// 1-3 people close together and 0-3 predictions of mixed quality.
inline Scene random_scene(std::mt19937_64& rng, std::int64_t image_id) {
  std::uniform_int_distribution<int> ngt(1, 3), npred(0, 3);
  std::uniform_real_distribution<double> off(-25, 25), frac(0, 0.15), score(0, 1), coin(0, 1);
  Scene s;
  const int n = ngt(rng);
  for (int i = 0; i < n; ++i) s.gts.push_back(random_gt(rng, image_id, image_id * 10 + i, 200 + off(rng), 200 + off(rng)));
  const int m = npred(rng);
  for (int i = 0; i < m; ++i) {
    const auto& g = s.gts[std::uniform_int_distribution<int>(0, n - 1)(rng)];
    dpit::PredInstance p{image_id, -1, {}, score(rng)};
    p.keypoints = coin(rng) < 0.15 ? noisy(rng, g, 200.0) : noisy(rng, g, frac(rng) * std::sqrt(g.area));
    s.preds.push_back(std::move(p));
  }
  return s;
}

inline double reference_oks(const dpit::GtInstance& g, const std::vector<dpit::Point2>& p, const dpit::OksParams& k) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < g.keypoints.size(); ++i) {
    if (g.keypoints[i].v == 0) continue;
    const double d2 = (p[i].x - g.keypoints[i].x) * (p[i].x - g.keypoints[i].x) +
                      (p[i].y - g.keypoints[i].y) * (p[i].y - g.keypoints[i].y);
    num += std::exp(-d2 / (2 * g.area * k.k[i] * k.k[i]));
    den += 1;
  }
  return num / den;
}

/// Assignment (pred -> gt or -1) is greedy-stable when each prediction, in
/// score order, holds the best still-free GT at or above t (later GT on
/// exact ties) or no free GT reaches t.
inline bool greedy_stable(const std::vector<int>& assign, const std::vector<std::vector<double>>& o, double t) {
  std::vector<bool> used(o.empty() ? 0 : o[0].size(), false);
  for (std::size_t d = 0; d < assign.size(); ++d) {
    const int g = assign[d];
    for (std::size_t h = 0; h < used.size(); ++h) {
      if (used[h] || static_cast<int>(h) == g) continue;
      if (g < 0) {
        if (o[d][h] >= t) return false;
      } else if (o[d][h] > o[d][g] || (o[d][h] == o[d][g] && static_cast<int>(h) > g)) {
        return false;
      }
    }
    if (g >= 0) {
      if (used[g] || o[d][g] < t) return false;
      used[g] = true;
    }
  }
  return true;
}

inline std::vector<int> exhaustive_match(const std::vector<std::vector<double>>& o, std::size_t ngt, double t) {
  const std::size_t nd = o.size();
  std::vector<int> assign(nd, -1);
  std::vector<std::vector<int>> stable;
  std::vector<bool> used(ngt, false);
  std::function<void(std::size_t)> rec = [&](std::size_t d) {
    if (d == nd) {
      if (greedy_stable(assign, o, t)) stable.push_back(assign);
      return;
    }
    assign[d] = -1;
    rec(d + 1);
    for (std::size_t g = 0; g < ngt; ++g) {
      if (used[g]) continue;
      used[g] = true;
      assign[d] = static_cast<int>(g);
      rec(d + 1);
      used[g] = false;
      assign[d] = -1;
    }
  };
  rec(0);
  if (stable.size() != 1) throw std::logic_error("oracle: expected exactly one greedy-stable assignment");
  return stable[0];
}

struct Result {
  double ap = 0, ar = 0;
  std::vector<double> ap_per_threshold;
};

inline Result ap_ar(const std::vector<dpit::GtInstance>& gts, const std::vector<dpit::PredInstance>& preds,
                    const dpit::OksParams& params, const std::vector<double>& thresholds) {
  std::map<std::int64_t, std::pair<std::vector<dpit::GtInstance>, std::vector<dpit::PredInstance>>> images;
  for (const auto& g : gts) images[g.image_id].first.push_back(g);
  for (const auto& p : preds) images[p.image_id].second.push_back(p);
  const std::size_t npos = gts.size();
  Result r;
  if (npos == 0) {
    r.ap = r.ar = preds.empty() ? 1.0 : 0.0;
    r.ap_per_threshold.assign(thresholds.size(), r.ap);
    return r;
  }
  double ap_sum = 0, ar_sum = 0;
  for (double t : thresholds) {
    std::vector<std::pair<double, bool>> dets;
    for (auto& [id, lists] : images) {
      auto& [ig, ip] = lists;
      std::stable_sort(ip.begin(), ip.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
      if (ip.size() > 20) ip.resize(20);
      std::vector<std::vector<double>> o(ip.size(), std::vector<double>(ig.size()));
      for (std::size_t d = 0; d < ip.size(); ++d) {
        for (std::size_t g = 0; g < ig.size(); ++g) o[d][g] = reference_oks(ig[g], ip[d].keypoints, params);
      }
      const auto m = exhaustive_match(o, ig.size(), t);
      for (std::size_t d = 0; d < ip.size(); ++d) dets.push_back({ip[d].score, m[d] >= 0});
    }
    std::stable_sort(dets.begin(), dets.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<double> rc, pr;
    double tp = 0;
    for (std::size_t i = 0; i < dets.size(); ++i) {
      tp += dets[i].second;
      rc.push_back(tp / static_cast<double>(npos));
      pr.push_back(tp / static_cast<double>(i + 1));
    }
    double sum = 0;
    for (int level = 0; level <= 100; ++level) {
      double best = 0;
      for (std::size_t i = 0; i < rc.size(); ++i) {
        if (rc[i] >= level / 100.0) best = std::max(best, pr[i]);
      }
      sum += best;
    }
    r.ap_per_threshold.push_back(sum / 101.0);
    ap_sum += sum / 101.0;
    ar_sum += tp / static_cast<double>(npos);
  }
  r.ap = ap_sum / static_cast<double>(thresholds.size());
  r.ar = ar_sum / static_cast<double>(thresholds.size());
  return r;
}

}  // namespace oracle
