#pragma once

#include <cmath>
#include <random>
#include <string>

#include "dpit/model_config.hpp"
#include "dpit/ops.hpp"
#include "dpit/params.hpp"

namespace dpit {

inline std::string stage_name(const std::string& prefix, std::size_t stage, const char* layer, const char* part) {
  return prefix + ".stage" + std::to_string(stage) + "." + layer + "." + part;
}

/// Registers conv weights (Kaiming fan-in normal) and zero biases for one branch.
template <typename T, typename Rng>
void add_backbone_params(ParameterSet<T>& params, const std::string& prefix, const BackboneConfig& cfg,
                         std::size_t in_channels, Rng& rng) {
  cfg.validate(prefix.c_str());
  std::size_t cin = in_channels;
  for (std::size_t s = 0; s < cfg.widths.size(); ++s) {
    const std::size_t width = cfg.widths[s];
    const std::size_t out = s + 1 == cfg.widths.size() ? cfg.out_channels : width;
    params.add(stage_name(prefix, s, "conv", "w"),
               normal_tensor<T>({3, 3, cin, width}, static_cast<T>(std::sqrt(2.0 / (9.0 * cin))), rng));
    params.add(stage_name(prefix, s, "conv", "b"), Tensor<T>({width}));
    params.add(stage_name(prefix, s, "down", "w"),
               normal_tensor<T>({3, 3, width, out}, static_cast<T>(std::sqrt(2.0 / (9.0 * width))), rng));
    params.add(stage_name(prefix, s, "down", "b"), Tensor<T>({out}));
    cin = out;
  }
}

/// H x W x 3 image -> (H / stride) x (W / stride) x C feature map.
template <typename T>
Var<T> encode_backbone(const BoundParams<T>& p, const std::string& prefix, const BackboneConfig& cfg, Var<T> image) {
  const Shape& s = image.shape();
  if (s.size() != 3 || s[2] != 3) throw DimensionError(prefix + ": expected H x W x 3 image, got " + to_string(s));
  const std::size_t stride = cfg.total_stride();
  if (s[0] % stride != 0 || s[1] % stride != 0) {
    throw ConfigError(prefix + ": input " + to_string(s) + " not divisible by total stride " + std::to_string(stride));
  }
  Var<T> x = image;
  for (std::size_t st = 0; st < cfg.widths.size(); ++st) {
    x = ops::conv2d(x, p[stage_name(prefix, st, "conv", "w")], 1, 1, 1, 1);
    x = ops::gelu(ops::add_bias(x, p[stage_name(prefix, st, "conv", "b")]));
    x = ops::conv2d(x, p[stage_name(prefix, st, "down", "w")], 2, 2, 1, 1);
    x = ops::add_bias(x, p[stage_name(prefix, st, "down", "b")]);
  }
  return x;
}

/// Full-image (bottom-up) branch.
template <typename T>
Var<T> encode_bu(const BoundParams<T>& p, const BackboneConfig& cfg, Var<T> image) {
  return encode_backbone(p, "bu", cfg, image);
}

/// Person-crop (top-down) branch.
template <typename T>
Var<T> encode_td(const BoundParams<T>& p, const BackboneConfig& cfg, Var<T> crop) {
  return encode_backbone(p, "td", cfg, crop);
}

}  // namespace dpit
