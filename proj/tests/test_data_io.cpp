#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "dpit/dataset.hpp"
#include "dpit/heatmap.hpp"
#include "dpit/image_io.hpp"
#include "dpit/scene.hpp"
#include "dpit/skeleton.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using dpit::BBox;
using dpit::Image;
using dpit::Point2;
using dpit::SceneSpec;

namespace {

fs::path scratch(const std::string& leaf) {
  fs::path dir = fs::temp_directory_path() / "dpit_data_io";
  fs::create_directories(dir);
  return dir / leaf;
}

std::string minimal_coco(std::size_t values) {
  nlohmann::json kp = nlohmann::json::array();
  for (std::size_t i = 0; i < values; ++i) kp.push_back(i % 3 == 2 ? 2 : static_cast<int>(10 + i));
  nlohmann::json j{{"images", {{{"id", 5}, {"file_name", "a.png"}, {"width", 64}, {"height", 48}}}},
                   {"annotations",
                    {{{"id", 42}, {"image_id", 5}, {"keypoints", kp}, {"bbox", {1, 2, 30, 40}}, {"area", 1200},
                      {"extra_field", "ignored"}}}}};
  return j.dump();
}

}  // namespace

TEST(Skeleton, SwapTablesAreInvolutions) {
  for (const auto& s : {dpit::coco17(), dpit::mpii16()}) {
    EXPECT_NO_THROW(s.validate());
    auto perm = s.flip_permutation();
    for (std::size_t i = 0; i < perm.size(); ++i) EXPECT_EQ(perm[perm[i]], i) << s.name;
  }
  auto c = dpit::coco17();
  EXPECT_EQ(c.size(), 17u);
  EXPECT_EQ(c.flip_permutation()[5], 6u);  // left_shoulder <-> right_shoulder
  EXPECT_EQ(c.flip_permutation()[0], 0u);
  EXPECT_EQ(dpit::mpii16().size(), 16u);
}

TEST(Skeleton, JsonRoundTripAndValidation) {
  for (const auto& s : {dpit::coco17(), dpit::mpii16()}) {
    const auto path = scratch(s.name + ".json").string();
    dpit::save_skeleton(s, path);
    EXPECT_EQ(dpit::load_skeleton(path), s);
  }
  auto j = dpit::to_json(dpit::coco17());
  j["swap_pairs"].push_back({5, 7});  // 5 already paired
  EXPECT_THROW(dpit::skeleton_from_json(j), dpit::ConfigError);
  j = dpit::to_json(dpit::coco17());
  j["limbs"].push_back({0, 17});
  EXPECT_THROW(dpit::skeleton_from_json(j), dpit::ConfigError);
  EXPECT_THROW(dpit::skeleton_by_name("h36m"), dpit::ConfigError);
}

TEST(ImageIo, PngRoundTripOfQuantizedImage) {
  std::mt19937_64 rng(3);
  Image img({13, 17, 3});
  std::uniform_int_distribution<int> byte(0, 255);
  for (auto& v : img.data()) v = static_cast<float>(byte(rng)) / 255.f;
  const auto path = scratch("rt.png").string();
  dpit::write_png(img, path);
  Image back = dpit::read_png(path);
  ASSERT_EQ(back.shape(), img.shape());
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_FLOAT_EQ(back[i], img[i]);
  EXPECT_THROW(dpit::read_png(scratch("missing.png").string()), dpit::ConfigError);
}

TEST(Scene, SinglePersonFullyVisible) {
  const auto skel = dpit::coco17();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SceneSpec spec;
    spec.min_persons = spec.max_persons = 1;
    spec.seed = seed;
    auto scene = dpit::generate_scene(spec, skel);
    ASSERT_EQ(scene.persons.size(), 1u);
    for (const auto& kp : scene.persons[0].keypoints) EXPECT_EQ(kp.v, 2) << "seed " << seed;
    const auto& b = scene.persons[0].bbox;
    EXPECT_GT(b.w, 0);
    EXPECT_GT(b.h, 0);
    for (const auto& kp : scene.persons[0].keypoints) {
      EXPECT_GE(kp.x, b.x);
      EXPECT_LE(kp.x, b.x + b.w);
      EXPECT_GE(kp.y, b.y);
      EXPECT_LE(kp.y, b.y + b.h);
    }
    EXPECT_GT(scene.persons[0].head_length, 0);
  }
}

TEST(Scene, SameSeedBitIdentical) {
  SceneSpec spec;
  spec.overlap_prob = 0.5;
  spec.seed = 99;
  auto a = dpit::generate_scene(spec, dpit::coco17());
  auto b = dpit::generate_scene(spec, dpit::coco17());
  EXPECT_TRUE(a.image == b.image);
  EXPECT_EQ(a.persons, b.persons);
  spec.seed = 100;
  EXPECT_FALSE(dpit::generate_scene(spec, dpit::coco17()).image == a.image);
}

TEST(Scene, FullOverlapCoversEarlierFigure) {
  int covered = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    SceneSpec spec;
    spec.min_persons = spec.max_persons = 2;
    spec.overlap_prob = 1.0;
    spec.seed = seed;
    auto scene = dpit::generate_scene(spec, dpit::coco17());
    bool any = false;
    for (const auto& kp : scene.persons[0].keypoints) any = any || kp.v == 1;
    covered += any;
  }
  EXPECT_GE(covered, 95);
}

TEST(Scene, VisibleJointColourNearAnnotation) {
  const auto skel = dpit::coco17();
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    SceneSpec spec;
    spec.overlap_prob = 0.5;
    spec.seed = seed;
    auto scene = dpit::generate_scene(spec, skel);
    const auto& img = scene.image;
    const long h = static_cast<long>(img.dim(0)), w = static_cast<long>(img.dim(1));
    for (const auto& person : scene.persons) {
      for (std::size_t j = 0; j < skel.size(); ++j) {
        const auto& kp = person.keypoints[j];
        if (kp.v != 2) continue;
        const auto col = dpit::joint_color(j, skel.size());
        bool found = false;
        for (long dy = -2; dy <= 2 && !found; ++dy) {
          for (long dx = -2; dx <= 2 && !found; ++dx) {
            const long r = std::lround(kp.y) + dy, c = std::lround(kp.x) + dx;
            if (r < 0 || c < 0 || r >= h || c >= w) continue;
            found = img.at(r, c, 0) == col[0] && img.at(r, c, 1) == col[1] && img.at(r, c, 2) == col[2];
          }
        }
        EXPECT_TRUE(found) << "seed " << seed << " joint " << j;
      }
    }
  }
}

TEST(Scene, InvalidSpecRejected) {
  SceneSpec spec;
  spec.min_persons = 3;
  spec.max_persons = 1;
  EXPECT_THROW(dpit::generate_scene(spec, dpit::coco17()), dpit::ConfigError);
  spec = {};
  spec.width = 0;
  EXPECT_THROW(dpit::generate_scene(spec, dpit::coco17()), dpit::ConfigError);
}

TEST(Coco, MinimalFileParses) {
  auto ds = dpit::parse_coco(minimal_coco(51));
  ASSERT_EQ(ds.annotations.size(), 1u);
  EXPECT_EQ(ds.annotations[0].keypoints.size(), 17u);
  EXPECT_EQ(ds.annotations[0].keypoints[1].x, 13);
  EXPECT_EQ(ds.annotations[0].keypoints[1].v, 2);
  EXPECT_EQ(ds.annotations[0].bbox.h, 40);
  auto groups = ds.grouped();
  ASSERT_EQ(groups.size(), 1u);
  EXPECT_EQ(groups[0].first, 5);
  EXPECT_EQ(groups[0].second.size(), 1u);
}

TEST(Coco, ArityErrorNamesAnnotation) {
  try {
    dpit::parse_coco(minimal_coco(50), 17);
    FAIL() << "expected a parse error";
  } catch (const dpit::ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("annotation 42"), std::string::npos) << e.what();
  }
  EXPECT_THROW(dpit::parse_coco("{\"images\": [", 17), dpit::ParseError);
  EXPECT_THROW(dpit::parse_coco("{\"images\": []}", 17), dpit::ParseError);
}

TEST(Coco, SerializeParseIsStable) {
  SceneSpec spec;
  spec.overlap_prob = 0.5;
  spec.seed = 11;
  auto set = dpit::generate_dataset(spec, 12, dpit::coco17());
  const auto x = dpit::serialize_coco(set.dataset);
  const auto once = dpit::parse_coco(x);
  const auto twice = dpit::parse_coco(dpit::serialize_coco(once));
  EXPECT_EQ(once, twice);
  EXPECT_EQ(dpit::serialize_coco(once), x);
  // generate -> serialize -> parse loses nothing
  EXPECT_EQ(once, set.dataset);
}

TEST(Coco, EmptyDatasetRoundTrips) {
  dpit::Dataset ds;
  ds.skeleton = dpit::coco17();
  auto back = dpit::parse_coco(dpit::serialize_coco(ds));
  EXPECT_TRUE(back.images.empty());
  EXPECT_TRUE(back.annotations.empty());
  EXPECT_EQ(back, ds);
}

TEST(Coco, PredictionsRoundTrip) {
  std::vector<dpit::Prediction> preds(2);
  preds[0].image_id = 3;
  preds[0].annotation_id = 7;
  preds[0].score = 0.25;
  preds[1].image_id = 4;
  for (auto& p : preds) p.keypoints.assign(17, {1.5, 2.25, 1});
  EXPECT_EQ(dpit::parse_predictions(dpit::serialize_predictions(preds), 17), preds);
  EXPECT_THROW(dpit::parse_predictions("{}", 17), dpit::ParseError);
}

TEST(Crop, TargetAspectBoxIsTranslation) {
  std::mt19937_64 rng(5);
  Image img = dpit::uniform_tensor<float>({64, 64, 3}, 0, 1, rng);
  // pixel centres sit at integers, so pixels 10..21 x 20..35 span [9.5, 21.5] x [19.5, 35.5]
  BBox box{9.5, 19.5, 12, 16};
  auto crop = dpit::crop_to_input(img, box, 16, 12, 1.0);
  EXPECT_DOUBLE_EQ(crop.transform.m00, 1.0);
  EXPECT_DOUBLE_EQ(crop.transform.m11, 1.0);
  EXPECT_DOUBLE_EQ(crop.transform.m01, 0.0);
  EXPECT_DOUBLE_EQ(crop.transform.m10, 0.0);
  for (std::size_t r = 0; r < 16; ++r) {
    for (std::size_t c = 0; c < 12; ++c) {
      for (std::size_t ch = 0; ch < 3; ++ch) EXPECT_NEAR(crop.image.at(r, c, ch), img.at(20 + r, 10 + c, ch), 1e-6);
    }
  }
}

TEST(Crop, BoxCentreMapsToCropCentre) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 100; ++trial) {
    BBox box{u(rng) * 300, u(rng) * 300, 5 + u(rng) * 200, 5 + u(rng) * 200};
    auto t = dpit::crop_transform(box, 256, 192);
    Point2 c = t.apply({box.cx(), box.cy()});
    // crop centre in pixel-centre coordinates
    EXPECT_NEAR(c.x, 95.5, 0.5);
    EXPECT_NEAR(c.y, 127.5, 0.5);
  }
}

TEST(Crop, RandomRoundTripBelowMilliPixel) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0, 1);
  double worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    BBox box{u(rng) * 400, u(rng) * 400, 1 + u(rng) * 300, 1 + u(rng) * 300};
    auto t = dpit::crop_transform(box, 256, 192);
    std::vector<Point2> pts;
    for (int i = 0; i < 17; ++i) pts.push_back({box.x + u(rng) * box.w, box.y + u(rng) * box.h});
    std::vector<Point2> in_crop;
    for (auto p : pts) in_crop.push_back(t.apply(p));
    auto back = dpit::to_image_coords(in_crop, t);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      worst = std::max<double>({worst, std::abs(back[i].x - pts[i].x), std::abs(back[i].y - pts[i].y)});
    }
  }
  EXPECT_LT(worst, 1e-3);
}

TEST(Crop, DegenerateBoxRejected) {
  Image img({8, 8, 3});
  EXPECT_THROW(dpit::crop_to_input(img, {1, 1, 0, 5}, 16, 12), dpit::ConfigError);
  EXPECT_THROW(dpit::crop_to_input(img, {1, 1, 5, -1}, 16, 12), dpit::ConfigError);
}

TEST(Crop, OutOfFrameIsZeroPadded) {
  Image img({8, 8, 3});
  for (auto& v : img.data()) v = 1.f;
  auto crop = dpit::crop_to_input(img, {-40, -40, 20, 20}, 16, 12);
  for (float v : crop.image.data()) EXPECT_EQ(v, 0.f);
}

TEST(ResizeFull, SameSizeUnchanged) {
  std::mt19937_64 rng(8);
  Image img = dpit::uniform_tensor<float>({512, 512, 3}, 0, 1, rng);
  auto lb = dpit::resize_full(img, 512, 512);
  EXPECT_TRUE(lb.image == img);
  EXPECT_EQ(lb.scale, 1.0);
  EXPECT_EQ(lb.pad_x, 0.0);
  EXPECT_EQ(lb.pad_y, 0.0);
}

TEST(ResizeFull, HalvesDoubleSizeInput) {
  Image img({1024, 1024, 3});
  // 2x2 blocks of constant value survive the 2x downscale exactly
  for (std::size_t r = 0; r < 1024; ++r) {
    for (std::size_t c = 0; c < 1024; ++c) img.at(r, c, 0) = static_cast<float>((r / 2 + c / 2) % 7);
  }
  auto lb = dpit::resize_full(img, 512, 512);
  EXPECT_EQ(lb.image.shape(), (dpit::Shape{512, 512, 3}));
  EXPECT_DOUBLE_EQ(lb.scale, 0.5);
  EXPECT_EQ(lb.pad_x, 0.0);
  EXPECT_EQ(lb.pad_y, 0.0);
  for (std::size_t r = 0; r < 512; r += 37) {
    for (std::size_t c = 0; c < 512; c += 41) EXPECT_FLOAT_EQ(lb.image.at(r, c, 0), static_cast<float>((r + c) % 7));
  }
}

TEST(ResizeFull, WideInputLetterboxedSymmetrically) {
  Image img({400, 600, 3});
  for (auto& v : img.data()) v = 1.f;
  auto lb = dpit::resize_full(img, 512, 512);
  const double s = 512.0 / 600.0;
  EXPECT_DOUBLE_EQ(lb.scale, s);
  EXPECT_NEAR(lb.pad_x, 0.0, 1e-9);
  EXPECT_NEAR(lb.pad_y, 0.5 * (512.0 - 400.0 * s), 1e-9);
  // content rows 512*400/600 = 341.33 tall, centred: pad ~85.33 above and below
  EXPECT_EQ(lb.image.at(40, 256, 0), 0.f);
  EXPECT_EQ(lb.image.at(471, 256, 0), 0.f);
  EXPECT_FLOAT_EQ(lb.image.at(256, 256, 0), 1.f);
  EXPECT_FLOAT_EQ(lb.image.at(256, 0, 0), 1.f);
  std::size_t top = 0, bottom = 0;
  for (std::size_t r = 0; r < 512 && lb.image.at(r, 256, 0) == 0.f; ++r) ++top;
  for (std::size_t r = 512; r > 0 && lb.image.at(r - 1, 256, 0) == 0.f; --r) ++bottom;
  EXPECT_EQ(top, bottom);
  // original centre maps to the letterbox centre
  Point2 c = lb.transform.apply({299.5, 199.5});
  EXPECT_NEAR(c.x, 255.5, 1e-9);
  EXPECT_NEAR(c.y, 255.5, 1e-9);
}

TEST(ResizeFull, Deterministic) {
  std::mt19937_64 rng(9);
  Image img = dpit::uniform_tensor<float>({300, 200, 3}, 0, 1, rng);
  EXPECT_TRUE(dpit::resize_full(img, 256, 256).image == dpit::resize_full(img, 256, 256).image);
}
