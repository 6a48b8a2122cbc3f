#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "dpit/dataset.hpp"
#include "dpit/geometry.hpp"
#include "dpit/skeleton.hpp"
#include "json.hpp"

namespace dpit {

/// Per-keypoint falloff constants k_i.
struct OksParams {
  std::vector<double> k;

  std::size_t size() const { return k.size(); }

  void validate() const {
    if (k.empty()) throw ConfigError("OKS constants are empty");
    for (double v : k) {
      if (!(v > 0)) throw ConfigError("OKS constants must be positive");
    }
  }

  /// k_i = 2 sigma_i from the skeleton file.
  static OksParams from_skeleton(const Skeleton& s) {
    OksParams p;
    for (double sigma : s.sigmas) p.k.push_back(2 * sigma);
    p.validate();
    return p;
  }
};

/// sum_i exp(-d_i^2 / (2 s^2 k_i^2)) [v_i > 0] / sum_i [v_i > 0], s^2 = area.
inline double oks(const std::vector<Keypoint>& gt, double area, const std::vector<Point2>& pred, const OksParams& p) {
  if (gt.size() != p.size() || pred.size() != p.size()) {
    throw DimensionError("oks: expected " + std::to_string(p.size()) + " keypoints, got gt " +
                         std::to_string(gt.size()) + " / pred " + std::to_string(pred.size()));
  }
  if (!(area > 0)) throw NumericError("oks: instance area must be positive");
  double sum = 0;
  std::size_t visible = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i].v <= 0) continue;
    const double dx = pred[i].x - gt[i].x, dy = pred[i].y - gt[i].y;
    sum += std::exp(-(dx * dx + dy * dy) / (2 * area * p.k[i] * p.k[i]));
    ++visible;
  }
  if (visible == 0) throw NumericError("oks: undefined, no visible keypoints");
  return sum / static_cast<double>(visible);
}

struct GtInstance {
  std::int64_t image_id = 0;
  std::int64_t id = 0;
  std::vector<Keypoint> keypoints;
  double area = 0;
  double head_length = 0;
};

struct PredInstance {
  std::int64_t image_id = 0;
  std::int64_t annotation_id = -1;
  std::vector<Point2> keypoints;
  double score = 0;
};

inline std::vector<double> default_oks_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back((50 + 5 * i) / 100.0);
  return t;
}

struct ApOptions {
  std::vector<double> thresholds = default_oks_thresholds();
  std::size_t max_dets = 20;  // per image, highest scores kept
  double area_split = 96.0 * 96.0;  // APM below, APL at or above
};

/// Values of -1 mark a bucket without ground truth.
struct ApResult {
  double ap = 0, ap50 = -1, ap75 = -1, apm = -1, apl = -1, ar = 0;
  std::vector<double> ap_per_threshold, recall_per_threshold;
  bool warning = false;
  std::string note;
};

namespace detail {

/// Greedy matching inside one image for one threshold: predictions in
/// descending score order, each takes the unmatched non-ignored GT of
/// highest OKS >= t (later GT wins exact ties); ignored GTs are only used
/// when no regular GT qualifies. Returns the matched GT per prediction or -1.
inline std::vector<int> greedy_match(const std::vector<std::vector<double>>& ious, const std::vector<bool>& gt_ignore,
                                     double t) {
  const std::size_t nd = ious.size();
  const std::size_t ng = gt_ignore.size();
  std::vector<std::size_t> gt_order(ng);
  std::iota(gt_order.begin(), gt_order.end(), 0);
  std::stable_sort(gt_order.begin(), gt_order.end(), [&](auto a, auto b) { return !gt_ignore[a] && gt_ignore[b]; });
  std::vector<bool> taken(ng, false);
  std::vector<int> out(nd, -1);
  for (std::size_t d = 0; d < nd; ++d) {
    double best = std::min(t, 1 - 1e-10);
    int m = -1;
    for (std::size_t gi : gt_order) {
      if (taken[gi]) continue;
      if (m > -1 && !gt_ignore[static_cast<std::size_t>(m)] && gt_ignore[gi]) break;
      if (ious[d][gi] < best) continue;
      best = ious[d][gi];
      m = static_cast<int>(gi);
    }
    if (m > -1) {
      taken[static_cast<std::size_t>(m)] = true;
      out[d] = m;
    }
  }
  return out;
}

/// 101-point interpolated precision from score-sorted TP flags.
inline double interpolated_ap(const std::vector<bool>& tp, std::size_t npos) {
  const std::size_t n = tp.size();
  if (n == 0 || npos == 0) return 0;
  std::vector<double> rc(n), pr(n);
  double t = 0, f = 0;
  for (std::size_t i = 0; i < n; ++i) {
    (tp[i] ? t : f) += 1;
    rc[i] = t / static_cast<double>(npos);
    pr[i] = t / (t + f);
  }
  for (std::size_t i = n - 1; i > 0; --i) pr[i - 1] = std::max(pr[i - 1], pr[i]);
  double sum = 0;
  for (int r = 0; r <= 100; ++r) {
    const double level = r / 100.0;
    const auto it = std::lower_bound(rc.begin(), rc.end(), level);
    if (it != rc.end()) sum += pr[static_cast<std::size_t>(it - rc.begin())];
  }
  return sum / 101.0;
}

inline double keypoint_extent_area(const std::vector<Point2>& kps) {
  if (kps.empty()) return 0;
  double x0 = kps[0].x, x1 = x0, y0 = kps[0].y, y1 = y0;
  for (const auto& p : kps) x0 = std::min(x0, p.x), x1 = std::max(x1, p.x), y0 = std::min(y0, p.y), y1 = std::max(y1, p.y);
  return (x1 - x0) * (y1 - y0);
}

struct ThresholdStats {
  std::vector<double> ap, recall;
  std::size_t npos = 0;
};

/// AP / recall per threshold for ground truth whose area lies in [lo, hi).
inline ThresholdStats evaluate_range(const std::vector<GtInstance>& gts, const std::vector<PredInstance>& preds,
                                     const OksParams& params, const ApOptions& opt, double lo, double hi) {
  std::map<std::int64_t, std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> images;
  for (std::size_t i = 0; i < gts.size(); ++i) images[gts[i].image_id].first.push_back(i);
  for (std::size_t i = 0; i < preds.size(); ++i) images[preds[i].image_id].second.push_back(i);

  ThresholdStats out;
  const std::size_t nt = opt.thresholds.size();
  // per threshold: (score, tp) of every non-ignored prediction, image order
  std::vector<std::vector<std::pair<double, bool>>> dets(nt);
  for (auto& [image_id, lists] : images) {
    auto& [gi, di] = lists;
    std::vector<bool> gt_ignore;
    for (auto g : gi) {
      const bool usable = gts[g].area >= lo && gts[g].area < hi;
      const bool labelled = std::any_of(gts[g].keypoints.begin(), gts[g].keypoints.end(),
                                        [](const Keypoint& k) { return k.v > 0; });
      gt_ignore.push_back(!(usable && labelled));
      out.npos += usable && labelled;
    }
    std::stable_sort(di.begin(), di.end(), [&](auto a, auto b) { return preds[a].score > preds[b].score; });
    if (di.size() > opt.max_dets) di.resize(opt.max_dets);
    std::vector<std::vector<double>> ious(di.size(), std::vector<double>(gi.size(), 0.0));
    for (std::size_t d = 0; d < di.size(); ++d) {
      for (std::size_t g = 0; g < gi.size(); ++g) {
        const auto& gt = gts[gi[g]];
        const bool labelled = std::any_of(gt.keypoints.begin(), gt.keypoints.end(), [](const Keypoint& k) { return k.v > 0; });
        ious[d][g] = labelled ? oks(gt.keypoints, gt.area, preds[di[d]].keypoints, params) : 0.0;
      }
    }
    for (std::size_t t = 0; t < nt; ++t) {
      const auto match = greedy_match(ious, gt_ignore, opt.thresholds[t]);
      for (std::size_t d = 0; d < di.size(); ++d) {
        const int m = match[d];
        bool ignore = m >= 0 && gt_ignore[static_cast<std::size_t>(m)];
        if (m < 0) {
          const double a = keypoint_extent_area(preds[di[d]].keypoints);
          ignore = a < lo || a >= hi;
        }
        if (!ignore) dets[t].push_back({preds[di[d]].score, m >= 0});
      }
    }
  }
  for (std::size_t t = 0; t < nt; ++t) {
    std::stable_sort(dets[t].begin(), dets[t].end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<bool> tp;
    std::size_t hits = 0;
    for (const auto& d : dets[t]) tp.push_back(d.second), hits += d.second;
    out.ap.push_back(interpolated_ap(tp, out.npos));
    out.recall.push_back(out.npos ? static_cast<double>(hits) / static_cast<double>(out.npos) : 0.0);
  }
  return out;
}

inline double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace detail

/// COCO-style keypoint AP/AR. Ground truth without any labelled keypoint is
/// ignored (neither a positive nor a false positive when matched).
inline ApResult ap_ar(const std::vector<GtInstance>& gts, const std::vector<PredInstance>& preds,
                      const OksParams& params, const ApOptions& opt = {}) {
  params.validate();
  if (opt.thresholds.empty()) throw ConfigError("ap_ar: no OKS thresholds");
  for (std::size_t i = 0; i < opt.thresholds.size(); ++i) {
    if (opt.thresholds[i] < 0 || opt.thresholds[i] > 1) throw ConfigError("ap_ar: thresholds must lie in [0, 1]");
    if (i > 0 && opt.thresholds[i] <= opt.thresholds[i - 1]) throw ConfigError("ap_ar: thresholds must ascend");
  }
  ApResult r;
  const auto all = detail::evaluate_range(gts, preds, params, opt, 0.0, HUGE_VAL);
  if (all.npos == 0) {
    r.warning = true;
    if (preds.empty()) {
      r.ap = r.ar = 1.0;
      r.note = "no ground truth and no predictions; AP and AR defined as 1";
    } else {
      r.ap = r.ar = 0.0;
      r.note = "no ground truth; every prediction is a false positive";
    }
    r.ap_per_threshold.assign(opt.thresholds.size(), r.ap);
    r.recall_per_threshold.assign(opt.thresholds.size(), r.ar);
  } else {
    r.ap_per_threshold = all.ap;
    r.recall_per_threshold = all.recall;
    r.ap = detail::mean(all.ap);
    r.ar = detail::mean(all.recall);
  }
  for (std::size_t i = 0; i < opt.thresholds.size(); ++i) {
    if (std::abs(opt.thresholds[i] - 0.5) < 1e-12) r.ap50 = r.ap_per_threshold[i];
    if (std::abs(opt.thresholds[i] - 0.75) < 1e-12) r.ap75 = r.ap_per_threshold[i];
  }
  const auto med = detail::evaluate_range(gts, preds, params, opt, 0.0, opt.area_split);
  const auto large = detail::evaluate_range(gts, preds, params, opt, opt.area_split, HUGE_VAL);
  if (med.npos > 0) r.apm = detail::mean(med.ap);
  if (large.npos > 0) r.apl = detail::mean(large.ap);
  return r;
}

struct PckhResult {
  std::vector<double> per_joint;  // percent; -1 when a joint is never visible
  double mean = 0;                // percent over every visible joint
  std::size_t skipped = 0;        // records without a usable head length
};

/// A joint counts as correct when its error is strictly below
/// threshold x head length.
inline PckhResult pckh(const std::vector<GtInstance>& gts, const std::vector<std::vector<Point2>>& preds,
                       double threshold = 0.5) {
  if (gts.size() != preds.size()) throw DimensionError("pckh: one prediction per ground-truth record required");
  PckhResult r;
  const std::size_t k = gts.empty() ? 0 : gts[0].keypoints.size();
  std::vector<std::size_t> hit(k, 0), total(k, 0);
  for (std::size_t i = 0; i < gts.size(); ++i) {
    const auto& g = gts[i];
    if (g.keypoints.size() != k || preds[i].size() != k) throw DimensionError("pckh: keypoint count differs between records");
    if (!(g.head_length > 0)) {
      ++r.skipped;
      continue;
    }
    const double limit = threshold * g.head_length;
    for (std::size_t j = 0; j < k; ++j) {
      if (g.keypoints[j].v <= 0) continue;
      ++total[j];
      hit[j] += std::hypot(preds[i][j].x - g.keypoints[j].x, preds[i][j].y - g.keypoints[j].y) < limit;
    }
  }
  std::size_t all_hit = 0, all_total = 0;
  for (std::size_t j = 0; j < k; ++j) {
    r.per_joint.push_back(total[j] ? 100.0 * static_cast<double>(hit[j]) / static_cast<double>(total[j]) : -1.0);
    all_hit += hit[j];
    all_total += total[j];
  }
  r.mean = all_total ? 100.0 * static_cast<double>(all_hit) / static_cast<double>(all_total) : 0.0;
  return r;
}

inline GtInstance to_gt(const PoseInstance& p) { return {p.image_id, p.id, p.keypoints, p.area, p.head_length}; }

inline PredInstance to_pred(const Prediction& p) {
  PredInstance out{p.image_id, p.annotation_id, {}, p.score};
  for (const auto& k : p.keypoints) out.keypoints.push_back({k.x, k.y});
  return out;
}

inline nlohmann::json report_json(const std::optional<ApResult>& ap, const std::optional<PckhResult>& pck,
                                  const std::vector<std::string>& joint_names) {
  auto num = [](double v) { return v < 0 ? nlohmann::json(nullptr) : nlohmann::json(v); };
  nlohmann::json j = nlohmann::json::object();
  if (ap) {
    j["AP"] = ap->ap;
    j["AP50"] = num(ap->ap50);
    j["AP75"] = num(ap->ap75);
    j["APM"] = num(ap->apm);
    j["APL"] = num(ap->apl);
    j["AR"] = ap->ar;
    if (ap->warning) j["warning"] = ap->note;
  }
  if (pck) {
    nlohmann::json per = nlohmann::json::object();
    for (std::size_t i = 0; i < pck->per_joint.size(); ++i) {
      per[i < joint_names.size() ? joint_names[i] : std::to_string(i)] = num(pck->per_joint[i]);
    }
    j["PCKh"] = {{"per_joint", per}, {"mean", pck->mean}, {"skipped_records", pck->skipped}};
  }
  return j;
}

}  // namespace dpit
