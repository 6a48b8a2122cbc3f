#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <string>

#include "dpit/dataset.hpp"
#include "dpit/session.hpp"
#include "json.hpp"
#include "metrics_oracle.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string output;
};

Run dpit_cli(const std::string& args) {
  const std::string cmd = std::string(DPIT_CLI) + " " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  Run r;
  if (!p) return r;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) r.output.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("dpit_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& rel) const { return (dir_ / rel).string(); }

  // Four small scenes, shared by the train/predict tests.
  void make_data(const std::string& name = "data", const std::string& extra = "") {
    auto r = dpit_cli("gen-data --count 4 --seed 3 --set scene.width=256 --set scene.height=256 " + extra +
                      " --out " + path(name));
    ASSERT_EQ(r.code, 0) << r.output;
  }

  std::string train_flags(const std::string& out) const {
    return "--set data.train=" + path("data/annotations.json") + " --set run.out=" + path(out) +
           " --set train.epochs=2 --set train.batch_size=4 --set train.augment=false --set run.seed=5";
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, GenDataWritesImagesAnnotationsAndSkeleton) {
  auto r = dpit_cli("gen-data --count 3 --seed 7 --out " + path("a"));
  ASSERT_EQ(r.code, 0) << r.output;
  std::size_t pngs = 0;
  for (const auto& e : fs::directory_iterator(path("a/images"))) pngs += e.path().extension() == ".png";
  EXPECT_EQ(pngs, 3u);
  EXPECT_TRUE(fs::exists(path("a/skeleton.json")));
  const auto ds = dpit::parse_coco(dpit::read_text(path("a/annotations.json")));
  EXPECT_EQ(ds.images.size(), 3u);
  EXPECT_GE(ds.annotations.size(), 3u);
}

TEST_F(Cli, GenDataSameSeedIsByteIdentical) {
  ASSERT_EQ(dpit_cli("gen-data --count 3 --seed 7 --out " + path("a")).code, 0);
  ASSERT_EQ(dpit_cli("gen-data --count 3 --seed 7 --out " + path("b")).code, 0);
  EXPECT_EQ(dpit::read_text(path("a/annotations.json")), dpit::read_text(path("b/annotations.json")));
  EXPECT_EQ(dpit::read_text(path("a/images/000002.png")), dpit::read_text(path("b/images/000002.png")));
}

TEST_F(Cli, GenDataZeroCountIsValidEmptyDataset) {
  ASSERT_EQ(dpit_cli("gen-data --count 0 --out " + path("e")).code, 0);
  const auto ds = dpit::parse_coco(dpit::read_text(path("e/annotations.json")));
  EXPECT_TRUE(ds.images.empty());
  EXPECT_TRUE(ds.annotations.empty());
  ASSERT_TRUE(ds.skeleton.has_value());
  EXPECT_EQ(ds.skeleton->size(), 17u);
}

TEST_F(Cli, GenDataUnwritablePathExitsTwo) {
  std::FILE* f = std::fopen(path("file").c_str(), "w");
  std::fclose(f);
  auto r = dpit_cli("gen-data --count 1 --out " + path("file/sub"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("cannot"), std::string::npos) << r.output;
}

TEST_F(Cli, TrainZeroEpochsWritesOnlyTheInitialCheckpoint) {
  make_data();
  auto r = dpit_cli("train " + train_flags("run") + " --set train.epochs=0");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(fs::exists(path("run/final.ckpt")));
  EXPECT_FALSE(fs::exists(path("run/epoch_0001.ckpt")));
  EXPECT_TRUE(dpit::read_text(path("run/loss.log")).empty());
  const auto ck = dpit::load_checkpoint(path("run/final.ckpt"));
  EXPECT_EQ(ck.params, dpit::init_model_params<float>(dpit::model_config_of(ck)));
}

TEST_F(Cli, TrainLogsOneLinePerStepAndResumesBitExactly) {
  make_data();
  auto full = dpit_cli("train " + train_flags("full"));
  ASSERT_EQ(full.code, 0) << full.output;
  const std::string log = dpit::read_text(path("full/loss.log"));
  std::size_t lines = 0;
  for (char ch : log) lines += ch == '\n';
  const auto ds = dpit::parse_coco(dpit::read_text(path("data/annotations.json")));
  EXPECT_EQ(lines, 2 * ((ds.annotations.size() + 3) / 4));
  EXPECT_TRUE(fs::exists(path("full/epoch_0001.ckpt")));

  // interrupted after one epoch, then resumed from that checkpoint
  ASSERT_EQ(dpit_cli("train " + train_flags("resumed") + " --resume " + path("full/epoch_0001.ckpt")).code, 0);
  EXPECT_EQ(dpit::read_text(path("resumed/loss.log")), log);
  EXPECT_EQ(dpit::read_text(path("resumed/final.ckpt")), dpit::read_text(path("full/final.ckpt")));

  // and a second identical run reproduces the curve
  ASSERT_EQ(dpit_cli("train " + train_flags("again")).code, 0);
  EXPECT_EQ(dpit::read_text(path("again/loss.log")), log);
}

TEST_F(Cli, TrainResumeMidEpochViaMaxSteps) {
  make_data();
  ASSERT_EQ(dpit_cli("train " + train_flags("full")).code, 0);
  ASSERT_EQ(dpit_cli("train " + train_flags("cut") + " --set train.max_steps=1").code, 0);
  ASSERT_EQ(dpit_cli("train " + train_flags("cut") + " --resume " + path("cut/final.ckpt")).code, 0);
  EXPECT_EQ(dpit::read_text(path("cut/loss.log")), dpit::read_text(path("full/loss.log")));
}

TEST_F(Cli, TrainConfigSkeletonMismatchExitsTwo) {
  make_data();
  auto r = dpit_cli("train " + train_flags("run") + " --set data.skeleton=mpii16");
  EXPECT_EQ(r.code, 2) << r.output;
  EXPECT_EQ(dpit_cli("train " + train_flags("run") + " --set model.keypoints=16").code, 2);
}

TEST_F(Cli, TrainNanAbortExitsThree) {
  make_data();
  auto r = dpit_cli("train " + train_flags("run") + " --set train.lr=1e38");
  EXPECT_EQ(r.code, 3) << r.output;
  EXPECT_NE(r.output.find("non-finite"), std::string::npos) << r.output;
}

TEST_F(Cli, PredictIsDeterministicAndWritesImageCoordinates) {
  make_data();
  ASSERT_EQ(dpit_cli("train " + train_flags("run") + " --set train.epochs=1").code, 0);
  const std::string ck = path("run/final.ckpt"), ann = path("data/annotations.json");
  ASSERT_EQ(dpit_cli("predict --checkpoint " + ck + " --annotations " + ann + " -o " + path("p1.json")).code, 0);
  ASSERT_EQ(dpit_cli("predict --checkpoint " + ck + " --annotations " + ann + " -o " + path("p2.json")).code, 0);
  EXPECT_EQ(dpit::read_text(path("p1.json")), dpit::read_text(path("p2.json")));
  const auto preds = dpit::parse_predictions(dpit::read_text(path("p1.json")), 17);
  const auto ds = dpit::parse_coco(dpit::read_text(ann));
  ASSERT_EQ(preds.size(), ds.annotations.size());
  for (const auto& p : preds) {
    for (const auto& k : p.keypoints) {
      EXPECT_GE(k.x, -64.0);
      EXPECT_LE(k.x, 320.0);
    }
  }
  ASSERT_EQ(dpit_cli("predict --mask-bu --checkpoint " + ck + " --annotations " + ann + " -o " + path("pm.json")).code, 0);
  EXPECT_NE(dpit::read_text(path("pm.json")), dpit::read_text(path("p1.json")));
}

TEST_F(Cli, PredictEmptyImageListGivesEmptyArray) {
  make_data();
  ASSERT_EQ(dpit_cli("train " + train_flags("run") + " --set train.epochs=0").code, 0);
  ASSERT_EQ(dpit_cli("gen-data --count 0 --out " + path("empty")).code, 0);
  auto r = dpit_cli("predict --checkpoint " + path("run/final.ckpt") + " --annotations " +
                    path("empty/annotations.json") + " -o " + path("p.json"));
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(nlohmann::json::parse(dpit::read_text(path("p.json"))), nlohmann::json::array());
}

TEST_F(Cli, PredictSkeletonMismatchExitsTwo) {
  make_data();
  make_data("mpii", "--set data.skeleton=mpii16");
  ASSERT_EQ(dpit_cli("train " + train_flags("run") + " --set train.epochs=0").code, 0);
  auto r = dpit_cli("predict --checkpoint " + path("run/final.ckpt") + " --annotations " +
                    path("mpii/annotations.json") + " -o " + path("p.json"));
  EXPECT_EQ(r.code, 2) << r.output;
}

namespace {

std::string predictions_from_gt(const dpit::Dataset& ds) {
  std::vector<dpit::Prediction> preds;
  for (const auto& a : ds.annotations) preds.push_back({a.image_id, a.id, a.keypoints, 1.0});
  return dpit::serialize_predictions(preds);
}

}  // namespace

TEST_F(Cli, EvalExactPredictionsScorePerfectly) {
  ASSERT_EQ(dpit_cli("gen-data --count 3 --seed 2 --out " + path("d")).code, 0);
  const auto ds = dpit::parse_coco(dpit::read_text(path("d/annotations.json")));
  dpit::write_text(path("pred.json"), predictions_from_gt(ds));
  auto coco = dpit_cli("eval --gt " + path("d/annotations.json") + " --pred " + path("pred.json") +
                       " --metric coco -o " + path("coco.json"));
  ASSERT_EQ(coco.code, 0) << coco.output;
  const auto rc = nlohmann::json::parse(dpit::read_text(path("coco.json")));
  EXPECT_DOUBLE_EQ(rc.at("AP").get<double>(), 1.0);
  EXPECT_DOUBLE_EQ(rc.at("AR").get<double>(), 1.0);
  auto pck = dpit_cli("eval --gt " + path("d/annotations.json") + " --pred " + path("pred.json") + " --metric pckh");
  ASSERT_EQ(pck.code, 0) << pck.output;
  const auto rp = nlohmann::json::parse(dpit::read_text(path("pred_pckh.json")));
  EXPECT_DOUBLE_EQ(rp.at("PCKh").at("mean").get<double>(), 100.0);
}

TEST_F(Cli, EvalOksPointEightFixtureGivesPointSeven) {
  const auto f = oracle::oks_point_eight_fixture();
  dpit::Dataset ds;
  ds.skeleton = dpit::coco17();
  ds.images.push_back({1, "000000.png", 640, 480});
  dpit::PoseInstance gt;
  gt.id = 1;
  gt.image_id = 1;
  gt.keypoints = f.gt.keypoints;
  gt.bbox = {90, 120, 60, 50};
  gt.area = f.gt.area;
  ds.annotations.push_back(gt);
  dpit::write_text(path("gt.json"), dpit::serialize_coco(ds));
  dpit::Prediction p{1, -1, {}, f.pred.score};
  for (const auto& k : f.pred.keypoints) p.keypoints.push_back({k.x, k.y, 1});
  dpit::write_text(path("pred.json"), dpit::serialize_predictions({p}));
  auto r = dpit_cli("eval --gt " + path("gt.json") + " --pred " + path("pred.json") + " -o " + path("m.json"));
  ASSERT_EQ(r.code, 0) << r.output;
  const auto m = nlohmann::json::parse(dpit::read_text(path("m.json")));
  EXPECT_NEAR(m.at("AP").get<double>(), 0.7, 1e-12);
  EXPECT_NEAR(m.at("AR").get<double>(), 0.7, 1e-12);
}

TEST_F(Cli, EvalIdMismatchExitsTwoListingIds) {
  ASSERT_EQ(dpit_cli("gen-data --count 2 --seed 2 --out " + path("d")).code, 0);
  auto ds = dpit::parse_coco(dpit::read_text(path("d/annotations.json")));
  ds.annotations[0].image_id = 404;
  dpit::write_text(path("pred.json"), predictions_from_gt(ds));
  auto r = dpit_cli("eval --gt " + path("d/annotations.json") + " --pred " + path("pred.json"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("404"), std::string::npos) << r.output;
}

TEST_F(Cli, GradCheckZeroSamplesIsVacuousPassWithWarning) {
  auto r = dpit_cli("grad-check --samples 0");
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("vacuous"), std::string::npos) << r.output;
}

TEST_F(Cli, GradCheckSmallSamplePassesAndCorruptedRuleFails) {
  auto ok = dpit_cli("grad-check --samples 12");
  EXPECT_EQ(ok.code, 0) << ok.output;
  auto bad = dpit_cli("grad-check --samples 12 --corrupt-backward conv2d");
  EXPECT_EQ(bad.code, 3) << bad.output;
  EXPECT_NE(bad.output.find("FAIL"), std::string::npos);
}

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(dpit_cli("").code, 2);
  EXPECT_EQ(dpit_cli("frobnicate").code, 2);
  EXPECT_EQ(dpit_cli("eval --gt x.json").code, 2);
  EXPECT_EQ(dpit_cli("train --set model.nope=1").code, 2);
  EXPECT_EQ(dpit_cli("train --config /nonexistent.toml").code, 2);
  EXPECT_EQ(dpit_cli("--help").code, 0);
}
