#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dpit/error.hpp"

namespace dpit {

/// Toy convolutional encoder: one stage per width, each stage is
/// conv3x3 -> GELU -> stride-2 conv3x3, so total stride is 2^stages.
struct BackboneConfig {
  std::vector<std::size_t> widths;
  std::size_t out_channels = 32;

  std::size_t total_stride() const { return std::size_t{1} << widths.size(); }

  void validate(const char* branch) const {
    if (widths.empty()) throw ConfigError(std::string(branch) + " backbone needs at least one stage");
    for (auto w : widths) {
      if (w == 0) throw ConfigError(std::string(branch) + " backbone width must be positive");
    }
    if (out_channels == 0) throw ConfigError(std::string(branch) + " backbone output channels must be positive");
  }
};

struct EncoderConfig {
  std::size_t depth = 12;
  std::size_t heads = 8;
  std::size_t hidden = 192;
  std::size_t ffn_mult = 3;
  double dropout = 0.0;

  std::size_t key_dim() const { return hidden / heads; }

  void validate() const {
    if (heads == 0 || hidden == 0) throw ConfigError("encoder heads and hidden dim must be positive");
    if (hidden % heads != 0) {
      throw ConfigError("hidden dim " + std::to_string(hidden) + " not divisible by " + std::to_string(heads) +
                        " heads");
    }
    if (ffn_mult == 0) throw ConfigError("ffn_mult must be positive");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
  }
};

/// Every architecture hyperparameter of the two-branch model.
struct ModelConfig {
  std::string name = "dpit-b";
  BackboneConfig bu{{16, 32, 32}, 32};
  BackboneConfig td{{16, 32}, 32};
  EncoderConfig encoder;
  std::size_t keypoints = 17;
  std::size_t bu_height = 512, bu_width = 512;
  std::size_t td_height = 256, td_width = 192;
  std::size_t bu_patch_h = 8, bu_patch_w = 8;
  std::size_t td_patch_h = 4, td_patch_w = 3;
  std::size_t heatmap_height = 64, heatmap_width = 48;
  std::size_t seed = 0;

  std::size_t bu_feature_h() const { return bu_height / bu.total_stride(); }
  std::size_t bu_feature_w() const { return bu_width / bu.total_stride(); }
  std::size_t td_feature_h() const { return td_height / td.total_stride(); }
  std::size_t td_feature_w() const { return td_width / td.total_stride(); }
  std::size_t bu_tokens() const { return (bu_feature_h() / bu_patch_h) * (bu_feature_w() / bu_patch_w); }
  std::size_t td_tokens() const { return (td_feature_h() / td_patch_h) * (td_feature_w() / td_patch_w); }
  std::size_t sequence_length() const { return keypoints + bu_tokens() + td_tokens(); }

  void validate() const {
    bu.validate("bottom-up");
    td.validate("top-down");
    encoder.validate();
    if (bu.out_channels != td.out_channels) {
      throw ConfigError("both branches must emit the same channel count");
    }
    if (keypoints == 0) throw ConfigError("keypoint count must be positive");
    if (encoder.hidden % 4 != 0) throw ConfigError("hidden dim must be divisible by 4 for 2-D sine-cosine positions");
    auto divisible = [](std::size_t a, std::size_t b, const std::string& what) {
      if (b == 0 || a % b != 0) {
        throw ConfigError(what + ": " + std::to_string(a) + " not divisible by " + std::to_string(b));
      }
    };
    divisible(bu_height, bu.total_stride(), "bottom-up input height vs stride");
    divisible(bu_width, bu.total_stride(), "bottom-up input width vs stride");
    divisible(td_height, td.total_stride(), "top-down input height vs stride");
    divisible(td_width, td.total_stride(), "top-down input width vs stride");
    divisible(bu_feature_h(), bu_patch_h, "bottom-up feature height vs patch");
    divisible(bu_feature_w(), bu_patch_w, "bottom-up feature width vs patch");
    divisible(td_feature_h(), td_patch_h, "top-down feature height vs patch");
    divisible(td_feature_w(), td_patch_w, "top-down feature width vs patch");
    if (heatmap_height == 0 || heatmap_width == 0) throw ConfigError("heatmap extents must be positive");
  }

  /// Switches the top-down geometry to square 256x256 crops, 4x4 patches,
  /// a 64x64 head and the 16-joint skeleton.
  void use_square_crops(std::size_t joints = 16) {
    td_height = 256;
    td_width = 256;
    td_patch_h = 4;
    td_patch_w = 4;
    heatmap_height = 64;
    heatmap_width = 64;
    keypoints = joints;
  }
};

inline ModelConfig preset_dpit_b() {
  ModelConfig c;
  c.name = "dpit-b";
  c.encoder = {12, 8, 192, 3, 0.0};
  return c;
}

inline ModelConfig preset_dpit_depth(std::size_t depth) {
  ModelConfig c = preset_dpit_b();
  c.name = "dpit-d" + std::to_string(depth);
  c.encoder.depth = depth;
  return c;
}

/// Desk-scale preset: half-resolution inputs (256x256 full image, 128x96
/// crops, 32x24 heatmaps), 64 + 64 visual tokens, small widths.
inline ModelConfig preset_dpit_tiny() {
  ModelConfig c;
  c.name = "dpit-tiny";
  c.bu = {{4, 8, 16}, 16};
  c.td = {{8, 16}, 16};
  c.encoder = {2, 4, 64, 3, 0.0};
  c.bu_height = c.bu_width = 256;
  c.bu_patch_h = c.bu_patch_w = 4;
  c.td_height = 128;
  c.td_width = 96;
  c.heatmap_height = 32;
  c.heatmap_width = 24;
  return c;
}

inline ModelConfig preset(const std::string& name) {
  if (name == "dpit-b") return preset_dpit_b();
  if (name == "dpit-d6") return preset_dpit_depth(6);
  if (name == "dpit-d12") return preset_dpit_depth(12);
  if (name == "dpit-d16") return preset_dpit_depth(16);
  if (name == "dpit-tiny") return preset_dpit_tiny();
  throw ConfigError("unknown preset '" + name + "' (expected dpit-b, dpit-d6, dpit-d12, dpit-d16, dpit-tiny)");
}

}  // namespace dpit
