#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "dpit/dataset.hpp"
#include "dpit/geometry.hpp"
#include "dpit/skeleton.hpp"

namespace dpit {

struct AugmentConfig {
  bool enabled = true;
  double max_rotation_deg = 45.0;
  double min_scale = 0.65, max_scale = 1.35;
  double flip_prob = 0.5;
};

/// One concrete draw.
struct AugmentDraw {
  double rotation_deg = 0;
  double scale = 1;
  bool flip = false;
};

inline AugmentDraw draw_augment(const AugmentConfig& cfg, std::mt19937_64& rng) {
  if (!cfg.enabled) return {};
  std::uniform_real_distribution<double> rot(-cfg.max_rotation_deg, cfg.max_rotation_deg);
  std::uniform_real_distribution<double> sc(cfg.min_scale, cfg.max_scale);
  std::bernoulli_distribution flip(cfg.flip_prob);
  AugmentDraw d;
  d.rotation_deg = rot(rng);
  d.scale = sc(rng);
  d.flip = flip(rng);
  return d;
}

struct Sample {
  Image image;
  std::vector<PoseInstance> persons;
};

/// Flip (x -> W-1-x), then scale and rotation, all about the image centre.
inline Affine2 augment_transform(const AugmentDraw& d, std::size_t height, std::size_t width) {
  const double cx = 0.5 * (static_cast<double>(width) - 1), cy = 0.5 * (static_cast<double>(height) - 1);
  Affine2 t = Affine2::translation(-cx, -cy);
  if (d.flip) t = Affine2::scaling(-1, 1).compose(t);
  t = Affine2::scaling(d.scale, d.scale).compose(t);
  t = Affine2::rotation(d.rotation_deg * std::numbers::pi / 180.0).compose(t);
  return Affine2::translation(cx, cy).compose(t);
}

/// Applies one affine to pixels and annotations. Flips also swap left/right
/// joints; keypoints leaving the frame become v = 0 with zeroed coordinates.
inline Sample apply_augment(const Sample& in, const AugmentDraw& d, const Skeleton& skel) {
  const std::size_t h = in.image.dim(0), w = in.image.dim(1);
  if (d.rotation_deg == 0 && d.scale == 1 && !d.flip) return in;
  const Affine2 t = augment_transform(d, h, w);
  Sample out{warp_affine(in.image, t, h, w), {}};
  const auto perm = skel.flip_permutation();
  for (const auto& p : in.persons) {
    if (p.keypoints.size() != skel.size()) throw DimensionError("augment: instance keypoint count differs from skeleton");
    PoseInstance q = p;
    for (std::size_t j = 0; j < p.keypoints.size(); ++j) {
      const Keypoint& src = p.keypoints[d.flip ? perm[j] : j];
      Keypoint kp = src;
      if (src.v > 0) {
        const Point2 m = t.apply({src.x, src.y});
        kp.x = m.x;
        kp.y = m.y;
        if (m.x < -0.5 || m.y < -0.5 || m.x >= static_cast<double>(w) - 0.5 || m.y >= static_cast<double>(h) - 0.5) {
          kp = {0, 0, 0};
        }
      }
      q.keypoints[j] = kp;
    }
    double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
    for (const Point2 c : {Point2{p.bbox.x, p.bbox.y}, Point2{p.bbox.x + p.bbox.w, p.bbox.y},
                           Point2{p.bbox.x, p.bbox.y + p.bbox.h}, Point2{p.bbox.x + p.bbox.w, p.bbox.y + p.bbox.h}}) {
      const Point2 m = t.apply(c);
      x0 = std::min(x0, m.x), y0 = std::min(y0, m.y), x1 = std::max(x1, m.x), y1 = std::max(y1, m.y);
    }
    x0 = std::clamp(x0, 0.0, double(w)), x1 = std::clamp(x1, 0.0, double(w));
    y0 = std::clamp(y0, 0.0, double(h)), y1 = std::clamp(y1, 0.0, double(h));
    q.bbox = {x0, y0, x1 - x0, y1 - y0};
    q.area = q.bbox.area();
    q.head_length = p.head_length * d.scale;
    out.persons.push_back(std::move(q));
  }
  return out;
}

}  // namespace dpit
