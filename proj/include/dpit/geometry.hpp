#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "dpit/tensor.hpp"

namespace dpit {

/// Images are H x W x 3 float tensors with values in [0, 1]. Pixel (i, j)
/// has its centre at continuous coordinate (x = j, y = i).
using Image = Tensor<float>;

struct Point2 {
  double x = 0, y = 0;
};

/// [x, y, w, h] in continuous image coordinates.
struct BBox {
  double x = 0, y = 0, w = 0, h = 0;

  double cx() const { return x + 0.5 * w; }
  double cy() const { return y + 0.5 * h; }
  double area() const { return w * h; }
};

/// x' = m00 x + m01 y + m02, y' = m10 x + m11 y + m12.
struct Affine2 {
  double m00 = 1, m01 = 0, m02 = 0;
  double m10 = 0, m11 = 1, m12 = 0;

  static Affine2 identity() { return {}; }
  static Affine2 translation(double tx, double ty) { return {1, 0, tx, 0, 1, ty}; }
  static Affine2 scaling(double sx, double sy) { return {sx, 0, 0, 0, sy, 0}; }
  static Affine2 rotation(double radians) {
    const double c = std::cos(radians), s = std::sin(radians);
    return {c, -s, 0, s, c, 0};
  }

  Point2 apply(Point2 p) const { return {m00 * p.x + m01 * p.y + m02, m10 * p.x + m11 * p.y + m12}; }

  double determinant() const { return m00 * m11 - m01 * m10; }

  Affine2 inverse() const {
    const double det = determinant();
    if (!(std::abs(det) > 1e-12) || !std::isfinite(det)) throw Error("affine transform is singular");
    const double i00 = m11 / det, i01 = -m01 / det, i10 = -m10 / det, i11 = m00 / det;
    return {i00, i01, -(i00 * m02 + i01 * m12), i10, i11, -(i10 * m02 + i11 * m12)};
  }

  /// (this o other): apply `other` first.
  Affine2 compose(const Affine2& o) const {
    return {m00 * o.m00 + m01 * o.m10, m00 * o.m01 + m01 * o.m11, m00 * o.m02 + m01 * o.m12 + m02,
            m10 * o.m00 + m11 * o.m10, m10 * o.m01 + m11 * o.m11, m10 * o.m02 + m11 * o.m12 + m12};
  }
};

/// Bilinear read with zero outside the image.
inline void sample_bilinear(const Image& img, double x, double y, float* out) {
  const std::size_t h = img.dim(0), w = img.dim(1), c = img.dim(2);
  const double fx = std::floor(x), fy = std::floor(y);
  const double ax = x - fx, ay = y - fy;
  const long x0 = static_cast<long>(fx), y0 = static_cast<long>(fy);
  for (std::size_t k = 0; k < c; ++k) out[k] = 0.f;
  const double wts[4] = {(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay, ax * ay};
  const long xs[4] = {x0, x0 + 1, x0, x0 + 1};
  const long ys[4] = {y0, y0, y0 + 1, y0 + 1};
  for (int n = 0; n < 4; ++n) {
    if (wts[n] == 0.0) continue;
    if (xs[n] < 0 || ys[n] < 0 || xs[n] >= static_cast<long>(w) || ys[n] >= static_cast<long>(h)) continue;
    const float* p = img.ptr() + (static_cast<std::size_t>(ys[n]) * w + static_cast<std::size_t>(xs[n])) * c;
    for (std::size_t k = 0; k < c; ++k) out[k] += static_cast<float>(wts[n]) * p[k];
  }
}

/// Output pixel p takes the source value at forward.inverse()(p).
inline Image warp_affine(const Image& src, const Affine2& forward, std::size_t out_h, std::size_t out_w) {
  const Affine2 inv = forward.inverse();
  const std::size_t c = src.dim(2);
  Image out({out_h, out_w, c});
  for (std::size_t i = 0; i < out_h; ++i) {
    for (std::size_t j = 0; j < out_w; ++j) {
      const Point2 s = inv.apply({static_cast<double>(j), static_cast<double>(i)});
      sample_bilinear(src, s.x, s.y, out.ptr() + (i * out_w + j) * c);
    }
  }
  return out;
}

struct Crop {
  Image image;
  Affine2 transform;  // image coordinates -> crop coordinates
};

/// Box expansion applied before fitting the target aspect ratio.
inline constexpr double kBoxExpansion = 1.25;

/// Affine taking `box` (expanded, then widened to the target aspect about its
/// centre) onto a target_h x target_w crop.
inline Affine2 crop_transform(const BBox& box, std::size_t target_h, std::size_t target_w,
                              double expansion = kBoxExpansion) {
  if (!(box.w > 0) || !(box.h > 0)) throw ConfigError("crop: bounding box must have positive extent");
  double bw = box.w * expansion, bh = box.h * expansion;
  const double aspect = static_cast<double>(target_w) / static_cast<double>(target_h);
  if (bw > aspect * bh) {
    bh = bw / aspect;
  } else {
    bw = aspect * bh;
  }
  const double s = static_cast<double>(target_w) / bw;
  return {s, 0, 0.5 * (static_cast<double>(target_w) - 1) - s * box.cx(),
          0, s, 0.5 * (static_cast<double>(target_h) - 1) - s * box.cy()};
}

inline Crop crop_to_input(const Image& image, const BBox& box, std::size_t target_h, std::size_t target_w,
                          double expansion = kBoxExpansion) {
  Affine2 t = crop_transform(box, target_h, target_w, expansion);
  return {warp_affine(image, t, target_h, target_w), t};
}

struct Letterbox {
  Image image;
  Affine2 transform;  // original -> letterboxed
  double scale = 1, pad_x = 0, pad_y = 0;
};

/// Uniform resize into target_h x target_w, centred, zero padding.
inline Letterbox resize_full(const Image& image, std::size_t target_h, std::size_t target_w) {
  if (target_h == 0 || target_w == 0) throw ConfigError("resize target must be positive");
  const double h = static_cast<double>(image.dim(0)), w = static_cast<double>(image.dim(1));
  const double s = std::min(static_cast<double>(target_w) / w, static_cast<double>(target_h) / h);
  Letterbox lb;
  lb.scale = s;
  lb.pad_x = 0.5 * (static_cast<double>(target_w) - s * w);
  lb.pad_y = 0.5 * (static_cast<double>(target_h) - s * h);
  // Half-pixel convention: x' + 0.5 = s (x + 0.5) + pad.
  lb.transform = {s, 0, 0.5 * s - 0.5 + lb.pad_x, 0, s, 0.5 * s - 0.5 + lb.pad_y};
  if (image.dim(0) == target_h && image.dim(1) == target_w) {
    lb.image = image;
  } else {
    lb.image = warp_affine(image, lb.transform, target_h, target_w);
  }
  return lb;
}

}  // namespace dpit
