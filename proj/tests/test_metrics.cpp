#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "dpit/metrics.hpp"
#include "metrics_oracle.hpp"

using dpit::GtInstance;
using dpit::Keypoint;
using dpit::OksParams;
using dpit::Point2;
using dpit::PredInstance;

namespace {

const OksParams kCoco = OksParams::from_skeleton(dpit::coco17());

std::vector<Point2> exact(const GtInstance& g) {
  std::vector<Point2> out;
  for (const auto& k : g.keypoints) out.push_back({k.x, k.y});
  return out;
}

GtInstance one_visible(double area, std::size_t joint) {
  GtInstance g{1, 1, std::vector<Keypoint>(17, {0, 0, 0}), area, 0};
  g.keypoints[joint] = {10, 20, 2};
  return g;
}

}  // namespace

TEST(Oks, ClosedForms) {
  std::mt19937_64 rng(1);
  auto g = oracle::random_gt(rng, 1, 1);
  EXPECT_EQ(dpit::oks(g.keypoints, g.area, exact(g), kCoco), 1.0);

  const double area = 2500, k = kCoco.k[3];
  // d^2 = 2 s^2 k^2
  const double d = std::sqrt(2 * area * k * k);
  auto one = one_visible(area, 3);
  auto pred = exact(one);
  pred[3].x += d;
  EXPECT_NEAR(dpit::oks(one.keypoints, area, pred, kCoco), std::exp(-1.0), 1e-9);

  auto two = one;
  two.keypoints[8] = {40, 50, 1};
  auto pred2 = exact(two);
  pred2[3].x += d;
  EXPECT_NEAR(dpit::oks(two.keypoints, area, pred2, kCoco), (1 + std::exp(-1.0)) / 2, 1e-9);
}

TEST(Oks, Errors) {
  GtInstance g{1, 1, std::vector<Keypoint>(17, {1, 1, 0}), 100, 0};
  EXPECT_THROW(dpit::oks(g.keypoints, g.area, exact(g), kCoco), dpit::NumericError);
  g.keypoints[0].v = 2;
  EXPECT_THROW(dpit::oks(g.keypoints, 0.0, exact(g), kCoco), dpit::NumericError);
  EXPECT_THROW(dpit::oks(g.keypoints, g.area, std::vector<Point2>(16), kCoco), dpit::DimensionError);
  EXPECT_THROW((OksParams{{0.1, -1}}.validate()), dpit::ConfigError);
}

TEST(Oks, InvisibleJointsIgnored) {
  std::mt19937_64 rng(2);
  auto g = oracle::random_gt(rng, 1, 1);
  g.keypoints[4].v = 0;
  auto p = exact(g);
  p[4] = {1e6, -1e6};
  EXPECT_EQ(dpit::oks(g.keypoints, g.area, p, kCoco), 1.0);
}

TEST(Oks, TranslationInvariantExactly) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> eighth(-800, 800);
  for (int trial = 0; trial < 200; ++trial) {
    auto g = oracle::random_gt(rng, 1, 1);
    // dyadic coordinates keep the shifted differences exact
    std::vector<Point2> p;
    for (auto& k : g.keypoints) {
      k.x = eighth(rng) / 8.0, k.y = eighth(rng) / 8.0;
      p.push_back({k.x + eighth(rng) / 64.0, k.y + eighth(rng) / 64.0});
    }
    const double ox = eighth(rng) / 4.0, oy = eighth(rng) / 4.0;
    auto g2 = g;
    auto p2 = p;
    for (auto& k : g2.keypoints) k.x += ox, k.y += oy;
    for (auto& q : p2) q.x += ox, q.y += oy;
    EXPECT_EQ(dpit::oks(g.keypoints, g.area, p, kCoco), dpit::oks(g2.keypoints, g2.area, p2, kCoco));
  }
}

TEST(Oks, ScaleConsistent) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> lam(0.1, 10);
  for (int trial = 0; trial < 200; ++trial) {
    auto g = oracle::random_gt(rng, 1, 1);
    auto p = oracle::noisy(rng, g, 15.0);
    const double l = lam(rng);
    auto g2 = g;
    auto p2 = p;
    for (auto& k : g2.keypoints) k.x *= l, k.y *= l;
    for (auto& q : p2) q.x *= l, q.y *= l;
    g2.area *= l * l;
    EXPECT_NEAR(dpit::oks(g.keypoints, g.area, p, kCoco), dpit::oks(g2.keypoints, g2.area, p2, kCoco), 1e-9);
  }
}

TEST(ApAr, PerfectSinglePrediction) {
  std::mt19937_64 rng(5);
  auto g = oracle::random_gt(rng, 1, 1);
  auto r = dpit::ap_ar({g}, {{1, -1, exact(g), 0.9}}, kCoco);
  EXPECT_EQ(r.ap, 1.0);
  EXPECT_EQ(r.ar, 1.0);
  EXPECT_EQ(r.ap50, 1.0);
  EXPECT_EQ(r.ap75, 1.0);
  EXPECT_FALSE(r.warning);
}

TEST(ApAr, OksPointEightFixture) {
  auto f = oracle::oks_point_eight_fixture();
  ASSERT_EQ(dpit::oks(f.gt.keypoints, f.gt.area, f.pred.keypoints, kCoco), 0.8);
  auto r = dpit::ap_ar({f.gt}, {f.pred}, kCoco);
  EXPECT_DOUBLE_EQ(r.ap, 0.7);
  EXPECT_DOUBLE_EQ(r.ar, 0.7);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(r.ap_per_threshold[i], i < 7 ? 1.0 : 0.0);
}

TEST(ApAr, EmptyCases) {
  auto both = dpit::ap_ar({}, {}, kCoco);
  EXPECT_EQ(both.ap, 1.0);
  EXPECT_EQ(both.ar, 1.0);
  EXPECT_TRUE(both.warning);
  std::mt19937_64 rng(6);
  auto g = oracle::random_gt(rng, 1, 1);
  auto only_pred = dpit::ap_ar({}, {{1, -1, exact(g), 0.5}}, kCoco);
  EXPECT_EQ(only_pred.ap, 0.0);
  EXPECT_TRUE(only_pred.warning);
  auto no_pred = dpit::ap_ar({g}, {}, kCoco);
  EXPECT_EQ(no_pred.ap, 0.0);
  EXPECT_EQ(no_pred.ar, 0.0);
  EXPECT_FALSE(no_pred.warning);
}

TEST(ApAr, ThresholdValidation) {
  dpit::ApOptions opt;
  opt.thresholds = {0.7, 0.5};
  EXPECT_THROW(dpit::ap_ar({}, {}, kCoco, opt), dpit::ConfigError);
  opt.thresholds = {};
  EXPECT_THROW(dpit::ap_ar({}, {}, kCoco, opt), dpit::ConfigError);
}

TEST(ApAr, MatchesExhaustiveOracleOnSmallScenes) {
  std::mt19937_64 rng(7);
  for (int scene = 0; scene < 100; ++scene) {
    auto s = oracle::random_scene(rng, 1);
    const auto got = dpit::ap_ar(s.gts, s.preds, kCoco);
    const auto want = oracle::ap_ar(s.gts, s.preds, kCoco, dpit::default_oks_thresholds());
    EXPECT_EQ(got.ap, want.ap) << "scene " << scene;
    EXPECT_EQ(got.ar, want.ar) << "scene " << scene;
    EXPECT_EQ(got.ap_per_threshold, want.ap_per_threshold) << "scene " << scene;
  }
}

TEST(ApAr, MatchesOracleAcrossImages) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<GtInstance> gts;
    std::vector<PredInstance> preds;
    for (int img = 1; img <= 5; ++img) {
      auto s = oracle::random_scene(rng, img);
      gts.insert(gts.end(), s.gts.begin(), s.gts.end());
      preds.insert(preds.end(), s.preds.begin(), s.preds.end());
    }
    const auto got = dpit::ap_ar(gts, preds, kCoco);
    const auto want = oracle::ap_ar(gts, preds, kCoco, dpit::default_oks_thresholds());
    EXPECT_EQ(got.ap, want.ap);
    EXPECT_EQ(got.ar, want.ar);
  }
}

TEST(ApAr, NonIncreasingInThreshold) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<GtInstance> gts;
    std::vector<PredInstance> preds;
    for (int img = 1; img <= 4; ++img) {
      auto s = oracle::random_scene(rng, img);
      gts.insert(gts.end(), s.gts.begin(), s.gts.end());
      preds.insert(preds.end(), s.preds.begin(), s.preds.end());
    }
    const auto r = dpit::ap_ar(gts, preds, kCoco);
    for (std::size_t t = 1; t < r.ap_per_threshold.size(); ++t) {
      EXPECT_LE(r.ap_per_threshold[t], r.ap_per_threshold[t - 1]) << "trial " << trial;
    }
  }
}

TEST(ApAr, MaxDetectionsPerImage) {
  std::mt19937_64 rng(10);
  auto g = oracle::random_gt(rng, 1, 1);
  std::vector<PredInstance> preds;
  // 20 useless high-score predictions push the exact one out
  for (int i = 0; i < 20; ++i) preds.push_back({1, -1, std::vector<Point2>(17, {-500, -500}), 0.9});
  preds.push_back({1, -1, exact(g), 0.1});
  EXPECT_EQ(dpit::ap_ar({g}, preds, kCoco).ar, 0.0);
  dpit::ApOptions opt;
  opt.max_dets = 21;
  EXPECT_EQ(dpit::ap_ar({g}, preds, kCoco, opt).ar, 1.0);
}

TEST(ApAr, GroundTruthWithoutLabelsIgnored) {
  std::mt19937_64 rng(11);
  auto g = oracle::random_gt(rng, 1, 1);
  GtInstance empty{1, 2, std::vector<Keypoint>(17, {0, 0, 0}), 900, 0};
  auto r = dpit::ap_ar({g, empty}, {{1, -1, exact(g), 0.9}}, kCoco);
  EXPECT_EQ(r.ap, 1.0);
  EXPECT_EQ(r.ar, 1.0);
}

TEST(ApAr, AreaBuckets) {
  std::mt19937_64 rng(12);
  auto small = oracle::random_gt(rng, 1, 1);
  small.area = 50 * 50;
  auto big = oracle::random_gt(rng, 2, 2);
  big.area = 200 * 200;
  auto r = dpit::ap_ar({small, big}, {{1, -1, exact(small), 0.9}, {2, -1, std::vector<Point2>(17), 0.8}}, kCoco);
  EXPECT_EQ(r.apm, 1.0);
  EXPECT_EQ(r.apl, 0.0);
  auto only_small = dpit::ap_ar({small}, {{1, -1, exact(small), 0.9}}, kCoco);
  EXPECT_EQ(only_small.apl, -1.0);
}

TEST(Pckh, ExactPredictionsScoreHundred) {
  std::mt19937_64 rng(13);
  std::vector<GtInstance> gts;
  std::vector<std::vector<Point2>> preds;
  for (int i = 0; i < 5; ++i) {
    gts.push_back(oracle::random_gt(rng, 1, i));
    gts.back().head_length = 12;
    preds.push_back(exact(gts.back()));
  }
  auto r = dpit::pckh(gts, preds);
  EXPECT_EQ(r.mean, 100.0);
  for (double v : r.per_joint) EXPECT_TRUE(v == 100.0 || v == -1.0);
}

TEST(Pckh, StrictBoundary) {
  GtInstance g = one_visible(100, 2);
  g.head_length = 16;
  auto at = exact(g);
  at[2].x += 0.5 * 16;  // exactly on the limit
  EXPECT_EQ(dpit::pckh({g}, {at}).per_joint[2], 0.0);
  auto inside = exact(g);
  inside[2].y += 0.49 * 16;
  EXPECT_EQ(dpit::pckh({g}, {inside}).per_joint[2], 100.0);
  EXPECT_EQ(dpit::pckh({g}, {inside}).per_joint[0], -1.0);
}

TEST(Pckh, MissingHeadLengthSkipped) {
  GtInstance g = one_visible(100, 2);
  g.head_length = 0;
  auto r = dpit::pckh({g}, {exact(g)});
  EXPECT_EQ(r.skipped, 1u);
  EXPECT_EQ(r.mean, 0.0);
  EXPECT_THROW(dpit::pckh({g}, {}), dpit::DimensionError);
}

TEST(Report, JsonFields) {
  auto f = oracle::oks_point_eight_fixture();
  auto ap = dpit::ap_ar({f.gt}, {f.pred}, kCoco);
  GtInstance g = one_visible(100, 2);
  g.head_length = 10;
  auto pk = dpit::pckh({g}, {exact(g)});
  auto j = dpit::report_json(ap, pk, dpit::coco17().joints);
  EXPECT_DOUBLE_EQ(j["AP"].get<double>(), 0.7);
  EXPECT_TRUE(j["APL"].is_null() || j["APL"].is_number());
  EXPECT_EQ(j["PCKh"]["per_joint"]["right_eye"].get<double>(), 100.0);
  EXPECT_TRUE(j["PCKh"]["per_joint"]["nose"].is_null());
  for (const char* key : {"AP", "AP50", "AP75", "APM", "APL", "AR"}) EXPECT_TRUE(j.contains(key)) << key;
}
