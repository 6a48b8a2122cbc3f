#include <gtest/gtest.h>

#include <random>

#include "dpit/backbones.hpp"
#include "dpit/grad_check.hpp"

using dpit::BackboneConfig;
using dpit::BoundParams;
using dpit::ParameterSet;
using dpit::Tape;
using dpit::Tensor;

namespace {

template <typename T>
ParameterSet<T> make_params(const std::string& prefix, const BackboneConfig& cfg, std::uint64_t seed = 1) {
  ParameterSet<T> p;
  std::mt19937_64 rng(seed);
  dpit::add_backbone_params(p, prefix, cfg, 3, rng);
  return p;
}

template <typename T>
Tensor<T> run(const ParameterSet<T>& params, const std::string& prefix, const BackboneConfig& cfg,
              const Tensor<T>& image) {
  Tape<T> tape;
  BoundParams<T> bound(tape, params, false);
  return dpit::encode_backbone(bound, prefix, cfg, tape.constant(image)).value();
}

const BackboneConfig kBu{{4, 8, 16}, 16};
const BackboneConfig kTd{{8, 16}, 16};

}  // namespace

TEST(Backbones, BottomUp512ToStride8) {
  auto params = make_params<float>("bu", kBu);
  std::mt19937_64 rng(3);
  auto image = dpit::uniform_tensor<float>({512, 512, 3}, 0, 1, rng);
  EXPECT_EQ(kBu.total_stride(), 8u);
  EXPECT_EQ(run(params, "bu", kBu, image).shape(), (dpit::Shape{64, 64, 16}));
}

TEST(Backbones, TopDownCropShapes) {
  auto params = make_params<float>("td", kTd);
  std::mt19937_64 rng(4);
  EXPECT_EQ(run(params, "td", kTd, dpit::uniform_tensor<float>({256, 192, 3}, 0, 1, rng)).shape(),
            (dpit::Shape{64, 48, 16}));
  EXPECT_EQ(run(params, "td", kTd, dpit::uniform_tensor<float>({256, 256, 3}, 0, 1, rng)).shape(),
            (dpit::Shape{64, 64, 16}));
}

TEST(Backbones, ShapeIsPureFunctionOfInputShape) {
  auto params = make_params<float>("td", kTd);
  std::mt19937_64 rng(5);
  for (std::size_t h : {4u, 8u, 12u, 32u}) {
    for (std::size_t w : {4u, 16u, 20u}) {
      auto out = run(params, "td", kTd, dpit::uniform_tensor<float>({h, w, 3}, 0, 1, rng));
      EXPECT_EQ(out.shape(), (dpit::Shape{h / 4, w / 4, 16}));
    }
  }
}

TEST(Backbones, ZeroImageZeroBiasGivesZeroFeature) {
  for (const auto& [prefix, cfg] : {std::pair{std::string("bu"), kBu}, std::pair{std::string("td"), kTd}}) {
    auto params = make_params<float>(prefix, cfg);
    auto out = run(params, prefix, cfg, Tensor<float>({32, 24, 3}));
    for (float v : out.data()) EXPECT_EQ(v, 0.f);
  }
}

TEST(Backbones, DoublingFinalWeightsDoublesOutput) {
  auto params = make_params<float>("bu", kBu);
  std::mt19937_64 rng(6);
  auto image = dpit::uniform_tensor<float>({32, 32, 3}, 0, 1, rng);
  auto base = run(params, "bu", kBu, image);
  for (auto& v : params.at("bu.stage2.down.w").data()) v *= 2;
  auto doubled = run(params, "bu", kBu, image);
  for (std::size_t i = 0; i < base.size(); ++i) EXPECT_EQ(doubled[i], 2 * base[i]);
}

TEST(Backbones, NonDivisibleInputIsConfigError) {
  auto params = make_params<float>("bu", kBu);
  EXPECT_THROW(run(params, "bu", kBu, Tensor<float>({30, 32, 3})), dpit::ConfigError);
  EXPECT_THROW(run(params, "bu", kBu, Tensor<float>({32, 32, 1})), dpit::DimensionError);
}

TEST(Backbones, SeparateWeightsPerBranch) {
  ParameterSet<float> p;
  std::mt19937_64 rng(7);
  dpit::add_backbone_params(p, "bu", kBu, 3, rng);
  dpit::add_backbone_params(p, "td", kTd, 3, rng);
  EXPECT_EQ(p.size(), 4 * (kBu.widths.size() + kTd.widths.size()));
  EXPECT_EQ(p.at("bu.stage0.conv.w").shape(), (dpit::Shape{3, 3, 3, 4}));
  EXPECT_EQ(p.at("td.stage0.conv.w").shape(), (dpit::Shape{3, 3, 3, 8}));
  EXPECT_EQ(p.at("bu.stage2.down.w").shape(), (dpit::Shape{3, 3, 16, 16}));
}

TEST(Backbones, GradientsReachFirstConv) {
  for (const auto& [prefix, cfg] : {std::pair{std::string("bu"), BackboneConfig{{3, 4, 4}, 4}},
                                    std::pair{std::string("td"), BackboneConfig{{3, 4}, 4}}}) {
    auto params = make_params<double>(prefix, cfg, 11);
    std::mt19937_64 rng(12);
    auto image = dpit::uniform_tensor<double>({16, 8, 3}, 0, 1, rng);
    const auto out_shape = dpit::Shape{16 / cfg.total_stride(), 8 / cfg.total_stride(), 4};
    auto probe = dpit::uniform_tensor<double>(out_shape, -1, 1, rng);
    std::vector<Tensor<double>> values;
    std::vector<std::string> names;
    for (const auto& [n, t] : params) {
      names.push_back(n);
      values.push_back(t);
    }
    dpit::LossFn<double> f = [&](Tape<double>& tape, const std::vector<dpit::Var<double>>& leaves) {
      BoundParams<double> bound(names, leaves);
      auto feat = dpit::encode_backbone(bound, prefix, cfg, tape.constant(image));
      return dpit::ops::sum(dpit::ops::mul(feat, tape.constant(probe)));
    };
    dpit::GradCheckOptions opt;
    opt.samples = 60;
    auto report = dpit::grad_check(f, values, names, opt);
    EXPECT_TRUE(report.passed) << prefix << " max rel " << report.max_rel_error;
    bool first_conv_probed = false;
    for (const auto& e : report.entries) first_conv_probed |= e.tensor == prefix + ".stage0.conv.w";
    EXPECT_TRUE(first_conv_probed);
  }
}
