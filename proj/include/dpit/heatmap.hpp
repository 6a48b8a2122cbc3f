#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "dpit/geometry.hpp"
#include "dpit/ops.hpp"

namespace dpit {

/// Maps heatmap cells onto crop pixels: cell u covers crop pixels with
/// x + 0.5 = (u + 0.5) * stride_x.
struct HeatmapGeometry {
  std::size_t height = 64, width = 48;
  double stride_x = 4, stride_y = 4;

  static HeatmapGeometry for_crop(std::size_t hm_h, std::size_t hm_w, std::size_t crop_h, std::size_t crop_w) {
    return {hm_h, hm_w, static_cast<double>(crop_w) / static_cast<double>(hm_w),
            static_cast<double>(crop_h) / static_cast<double>(hm_h)};
  }

  Point2 crop_to_cell(Point2 p) const { return {(p.x + 0.5) / stride_x - 0.5, (p.y + 0.5) / stride_y - 0.5}; }
  Point2 cell_to_crop(Point2 c) const { return {(c.x + 0.5) * stride_x - 0.5, (c.y + 0.5) * stride_y - 0.5}; }
};

/// H x W x K response grid (channels-last).
template <typename T>
struct Heatmap {
  Tensor<T> grid;
  HeatmapGeometry geometry;

  std::size_t channels() const { return grid.dim(2); }
  T at(std::size_t row, std::size_t col, std::size_t k) const { return grid.at(row, col, k); }

  /// K x (H*W) layout, one flattened channel per row.
  Tensor<T> channel_major() const {
    const std::size_t h = grid.dim(0), w = grid.dim(1), k = grid.dim(2);
    Tensor<T> out({k, h * w});
    for (std::size_t i = 0; i < h * w; ++i) {
      for (std::size_t c = 0; c < k; ++c) out[c * h * w + i] = grid[i * k + c];
    }
    return out;
  }

  static Heatmap from_channel_major(const Tensor<T>& rows, const HeatmapGeometry& g) {
    const std::size_t k = rows.dim(0), hw = g.height * g.width;
    if (rows.rank() != 2 || rows.dim(1) != hw) {
      throw DimensionError("heatmap rows " + to_string(rows.shape()) + " vs head " + std::to_string(g.height) + "x" +
                           std::to_string(g.width));
    }
    Heatmap hm{Tensor<T>({g.height, g.width, k}), g};
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t i = 0; i < hw; ++i) hm.grid[i * k + c] = rows[c * hw + i];
    }
    return hm;
  }
};

/// Keypoint rows K x D times the shared D x (H*W) head, one heatmap row per keypoint.
template <typename T>
Var<T> project_keypoints(Var<T> keypoint_tokens, Var<T> head_w, const HeatmapGeometry& g) {
  if (head_w.shape().size() != 2 || head_w.shape()[1] != g.height * g.width) {
    throw DimensionError("heatmap head " + to_string(head_w.shape()) + " does not produce " +
                         std::to_string(g.height) + "x" + std::to_string(g.width) + " maps");
  }
  if (keypoint_tokens.shape().size() != 2 || keypoint_tokens.shape()[1] != head_w.shape()[0]) {
    throw DimensionError("heatmap head " + to_string(head_w.shape()) + " vs keypoint tokens " +
                         to_string(keypoint_tokens.shape()));
  }
  return ops::matmul(keypoint_tokens, head_w);
}

struct GroundTruthSpec {
  std::vector<Point2> keypoints;  // crop pixels
  std::vector<int> visibility;
  double sigma = 2.0;             // heatmap cells
  HeatmapGeometry geometry;
};

/// Continuous-centre Gaussian per visible keypoint, zeros for the rest.
/// Keypoints outside the grid are still rendered (their tails only).
template <typename T>
Heatmap<T> render_gaussian(const GroundTruthSpec& spec) {
  if (!(spec.sigma > 0)) throw ConfigError("render_gaussian: sigma must be positive");
  if (spec.visibility.size() != spec.keypoints.size()) throw DimensionError("render_gaussian: visibility length");
  const auto& g = spec.geometry;
  const std::size_t k = spec.keypoints.size();
  Heatmap<T> hm{Tensor<T>({g.height, g.width, k}), g};
  const double inv = 1.0 / (2.0 * spec.sigma * spec.sigma);
  for (std::size_t c = 0; c < k; ++c) {
    if (spec.visibility[c] <= 0) continue;
    const Point2 mu = g.crop_to_cell(spec.keypoints[c]);
    for (std::size_t r = 0; r < g.height; ++r) {
      const double dy = static_cast<double>(r) - mu.y;
      for (std::size_t q = 0; q < g.width; ++q) {
        const double dx = static_cast<double>(q) - mu.x;
        hm.grid.at(r, q, c) = static_cast<T>(std::exp(-(dx * dx + dy * dy) * inv));
      }
    }
  }
  return hm;
}

/// Mean squared error over every cell of the visible channels.
/// `pred` is in the K x (H*W) layout produced by project_keypoints.
template <typename T>
Var<T> mse_loss(Var<T> pred, const Heatmap<T>& gt, const std::vector<int>& visibility) {
  const std::size_t k = gt.channels();
  if (visibility.size() != k) throw DimensionError("mse_loss: visibility length differs from channel count");
  std::vector<bool> mask(k);
  std::size_t visible = 0;
  for (std::size_t c = 0; c < k; ++c) {
    mask[c] = visibility[c] > 0;
    visible += mask[c];
  }
  if (visible == 0) throw NumericError("mse_loss: no visible keypoints, loss undefined");
  const T cells = static_cast<T>(visible * gt.geometry.height * gt.geometry.width);
  return ops::masked_mse(pred, gt.channel_major(), mask, cells);
}

struct DecodedKeypoint {
  double x = 0, y = 0;  // crop pixels
  double score = 0;
};

/// Per channel: first (row-major) maximum, optional quarter-cell shift toward
/// the larger neighbour on each axis, then cell -> crop pixels.
template <typename T>
std::vector<DecodedKeypoint> decode(const Heatmap<T>& hm, bool refine = true) {
  const std::size_t h = hm.grid.dim(0), w = hm.grid.dim(1), k = hm.grid.dim(2);
  std::vector<DecodedKeypoint> out(k);
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t best_r = 0, best_q = 0;
    T best = hm.grid.at(0, 0, c);
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t q = 0; q < w; ++q) {
        const T v = hm.grid.at(r, q, c);
        if (v > best) {
          best = v;
          best_r = r;
          best_q = q;
        }
      }
    }
    double u = static_cast<double>(best_q), v = static_cast<double>(best_r);
    if (refine) {
      if (best_q > 0 && best_q + 1 < w) {
        const T left = hm.grid.at(best_r, best_q - 1, c), right = hm.grid.at(best_r, best_q + 1, c);
        if (right > left) u += 0.25;
        if (left > right) u -= 0.25;
      }
      if (best_r > 0 && best_r + 1 < h) {
        const T up = hm.grid.at(best_r - 1, best_q, c), down = hm.grid.at(best_r + 1, best_q, c);
        if (down > up) v += 0.25;
        if (up > down) v -= 0.25;
      }
    }
    const Point2 p = hm.geometry.cell_to_crop({u, v});
    out[c] = {p.x, p.y, static_cast<double>(best)};
  }
  return out;
}

/// Maps crop-space points back through the inverse of the crop transform.
inline std::vector<Point2> to_image_coords(const std::vector<Point2>& crop_points, const Affine2& crop_transform) {
  const Affine2 inv = crop_transform.inverse();
  std::vector<Point2> out;
  out.reserve(crop_points.size());
  for (const auto& p : crop_points) out.push_back(inv.apply(p));
  return out;
}

/// Writes `<stem>.f32` (little-endian float32, HWC row-major) and `<stem>.json`.
template <typename T>
void export_heatmap(const Heatmap<T>& hm, const std::string& stem) {
  std::ofstream bin(stem + ".f32", std::ios::binary);
  if (!bin) throw Error("cannot write " + stem + ".f32");
  for (T v : hm.grid.data()) {
    const float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    const unsigned char bytes[4] = {static_cast<unsigned char>(bits), static_cast<unsigned char>(bits >> 8),
                                    static_cast<unsigned char>(bits >> 16), static_cast<unsigned char>(bits >> 24)};
    bin.write(reinterpret_cast<const char*>(bytes), 4);
  }
  std::ofstream meta(stem + ".json");
  if (!meta) throw Error("cannot write " + stem + ".json");
  meta << "{\"shape\": [" << hm.grid.dim(0) << ", " << hm.grid.dim(1) << ", " << hm.grid.dim(2)
       << "], \"order\": \"HWC row-major\", \"dtype\": \"f32le\"}\n";
}

}  // namespace dpit
