#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "dpit/dataset.hpp"
#include "dpit/geometry.hpp"
#include "dpit/params.hpp"
#include "dpit/skeleton.hpp"

namespace dpit {

struct SceneSpec {
  std::size_t width = 512, height = 512;
  std::size_t min_persons = 1, max_persons = 3;
  double min_scale = 0.35, max_scale = 0.7;  // figure height / image height
  double overlap_prob = 0.0;                 // chance a figure is placed onto the previous one
  std::uint64_t seed = 0;

  void validate() const {
    if (width == 0 || height == 0) throw ConfigError("scene size must be positive");
    if (min_persons > max_persons) throw ConfigError("scene person range is empty");
    if (!(min_scale > 0) || min_scale > max_scale) throw ConfigError("scene scale range is empty");
    if (overlap_prob < 0 || overlap_prob > 1) throw ConfigError("overlap probability must lie in [0, 1]");
  }
};

struct Scene {
  Image image;
  std::vector<PoseInstance> persons;
};

namespace detail {

/// Standing pose, ankles at y = 0, head top at y = -1, +x toward the figure's left.
inline const std::map<std::string, Point2>& rest_pose() {
  static const std::map<std::string, Point2> pose{
      {"nose", {0, -0.88}},          {"left_eye", {0.035, -0.915}},   {"right_eye", {-0.035, -0.915}},
      {"left_ear", {0.075, -0.89}},  {"right_ear", {-0.075, -0.89}},  {"left_shoulder", {0.13, -0.76}},
      {"right_shoulder", {-0.13, -0.76}}, {"left_elbow", {0.17, -0.60}}, {"right_elbow", {-0.17, -0.60}},
      {"left_wrist", {0.19, -0.45}}, {"right_wrist", {-0.19, -0.45}}, {"left_hip", {0.08, -0.50}},
      {"right_hip", {-0.08, -0.50}}, {"left_knee", {0.085, -0.26}},   {"right_knee", {-0.085, -0.26}},
      {"left_ankle", {0.09, 0.0}},   {"right_ankle", {-0.09, 0.0}},   {"pelvis", {0, -0.50}},
      {"thorax", {0, -0.76}},        {"upper_neck", {0, -0.82}},      {"head_top", {0, -1.0}}};
  return pose;
}

/// (parent, child, max bend in radians) in the order they are posed.
struct Bone {
  std::string parent, child;
  double bend;
};

inline const std::vector<Bone>& bones() {
  static const std::vector<Bone> b{
      {"left_shoulder", "left_elbow", 1.2},  {"left_elbow", "left_wrist", 1.2},
      {"right_shoulder", "right_elbow", 1.2}, {"right_elbow", "right_wrist", 1.2},
      {"left_hip", "left_knee", 0.45},       {"left_knee", "left_ankle", 0.45},
      {"right_hip", "right_knee", 0.45},     {"right_knee", "right_ankle", 0.45}};
  return b;
}

inline Point2 rotate(Point2 v, double a) {
  const double c = std::cos(a), s = std::sin(a);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

inline float quantize(double v) { return static_cast<float>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)) / 255.f; }

/// Distinct saturated colour per joint index.
inline std::array<float, 3> joint_color(std::size_t j, std::size_t k) {
  const double h = 6.0 * static_cast<double>(j) / static_cast<double>(k);
  const double x = 1.0 - std::abs(std::fmod(h, 2.0) - 1.0);
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(h)) {
    case 0: r = 1, g = x; break;
    case 1: r = x, g = 1; break;
    case 2: g = 1, b = x; break;
    case 3: g = x, b = 1; break;
    case 4: r = x, b = 1; break;
    default: r = 1, b = x; break;
  }
  const double v = j % 2 == 0 ? 0.95 : 0.75;
  return {quantize(0.05 + v * r * 0.9), quantize(0.05 + v * g * 0.9), quantize(0.05 + v * b * 0.9)};
}

class Canvas {
 public:
  Canvas(std::size_t h, std::size_t w, std::array<float, 3> background)
      : image_({h, w, 3}), owner_(h * w, -1), h_(h), w_(w) {
    for (std::size_t i = 0; i < h * w; ++i) {
      for (int c = 0; c < 3; ++c) image_[i * 3 + c] = background[c];
    }
  }

  void disc(Point2 c, double r, std::array<float, 3> color, int owner) {
    paint(c.x - r, c.y - r, c.x + r, c.y + r, color, owner,
          [&](double x, double y) { return (x - c.x) * (x - c.x) + (y - c.y) * (y - c.y) <= r * r; });
  }

  void segment(Point2 a, Point2 b, double half_width, std::array<float, 3> color, int owner) {
    const double dx = b.x - a.x, dy = b.y - a.y, len2 = dx * dx + dy * dy;
    paint(std::min(a.x, b.x) - half_width, std::min(a.y, b.y) - half_width, std::max(a.x, b.x) + half_width,
          std::max(a.y, b.y) + half_width, color, owner, [&](double x, double y) {
            double t = len2 > 0 ? ((x - a.x) * dx + (y - a.y) * dy) / len2 : 0.0;
            t = std::clamp(t, 0.0, 1.0);
            const double px = a.x + t * dx - x, py = a.y + t * dy - y;
            return px * px + py * py <= half_width * half_width;
          });
  }

  /// Owner of the pixel nearest to p, or -2 outside the canvas.
  int owner_at(Point2 p) const {
    const long x = std::lround(p.x), y = std::lround(p.y);
    if (x < 0 || y < 0 || x >= static_cast<long>(w_) || y >= static_cast<long>(h_)) return -2;
    return owner_[static_cast<std::size_t>(y) * w_ + static_cast<std::size_t>(x)];
  }

  Image& image() { return image_; }

 private:
  template <typename Inside>
  void paint(double x0, double y0, double x1, double y1, std::array<float, 3> color, int owner, Inside inside) {
    const long ix0 = std::max(0L, static_cast<long>(std::floor(x0)));
    const long iy0 = std::max(0L, static_cast<long>(std::floor(y0)));
    const long ix1 = std::min(static_cast<long>(w_) - 1, static_cast<long>(std::ceil(x1)));
    const long iy1 = std::min(static_cast<long>(h_) - 1, static_cast<long>(std::ceil(y1)));
    for (long y = iy0; y <= iy1; ++y) {
      for (long x = ix0; x <= ix1; ++x) {
        if (!inside(static_cast<double>(x), static_cast<double>(y))) continue;
        const std::size_t i = static_cast<std::size_t>(y) * w_ + static_cast<std::size_t>(x);
        for (int c = 0; c < 3; ++c) image_[i * 3 + c] = color[c];
        owner_[i] = owner;
      }
    }
  }

  Image image_;
  std::vector<int> owner_;
  std::size_t h_, w_;
};

struct Figure {
  std::vector<Point2> joints;
  double height = 0;
  double disc_radius() const { return std::max(2.0, 0.016 * height); }
  double limb_half_width() const { return std::max(1.0, 0.012 * height); }
};

/// Random pose of `height` pixels with ankles-centre at the origin.
inline Figure pose_figure(const Skeleton& skel, double height, std::mt19937_64& rng) {
  const auto& rest = rest_pose();
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const double min_gap_factor = 2.0;
  for (int attempt = 0;; ++attempt) {
    std::map<std::string, Point2> pos(rest.begin(), rest.end());
    std::map<std::string, double> angle;
    for (const auto& b : bones()) {
      const Point2 rest_vec{rest.at(b.child).x - rest.at(b.parent).x, rest.at(b.child).y - rest.at(b.parent).y};
      const double a = angle[b.parent] + b.bend * unit(rng);
      angle[b.child] = a;
      const Point2 v = rotate(rest_vec, a);
      pos[b.child] = {pos[b.parent].x + v.x, pos[b.parent].y + v.y};
    }
    const double lean = 0.2 * unit(rng);
    Figure f;
    f.height = height;
    for (const auto& name : skel.joints) {
      auto it = pos.find(name);
      if (it == pos.end()) throw ConfigError("scene generator has no rest position for joint '" + name + "'");
      const Point2 p = rotate(it->second, lean);
      f.joints.push_back({p.x * height, p.y * height});
    }
    // Keep own discs apart so a figure never hides its own joints.
    const double gap = min_gap_factor * f.disc_radius() + 1.0;
    bool ok = true;
    for (std::size_t a = 0; a < f.joints.size() && ok; ++a) {
      for (std::size_t b = a + 1; b < f.joints.size() && ok; ++b) {
        const double dx = f.joints[a].x - f.joints[b].x, dy = f.joints[a].y - f.joints[b].y;
        ok = dx * dx + dy * dy >= gap * gap;
      }
    }
    if (ok || attempt > 200) return f;
  }
}

}  // namespace detail

/// Renders stick figures in order; later figures paint over earlier ones.
/// Visibility: 2 when the joint's own disc is on top at its centre pixel,
/// 1 when a later figure covers it, 0 (with zeroed coordinates) when the
/// centre lies outside the image.
inline Scene generate_scene(const SceneSpec& spec, const Skeleton& skel) {
  spec.validate();
  skel.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double w = static_cast<double>(spec.width), h = static_cast<double>(spec.height);
  const std::array<float, 3> background{detail::quantize(0.08 + 0.12 * u01(rng)),
                                        detail::quantize(0.08 + 0.12 * u01(rng)),
                                        detail::quantize(0.08 + 0.12 * u01(rng))};
  detail::Canvas canvas(spec.height, spec.width, background);
  const std::size_t count =
      std::uniform_int_distribution<std::size_t>(spec.min_persons, spec.max_persons)(rng);
  const int stride = static_cast<int>(skel.size()) + 1;

  std::vector<detail::Figure> figures;
  for (std::size_t p = 0; p < count; ++p) {
    const double height = h * (spec.min_scale + (spec.max_scale - spec.min_scale) * u01(rng));
    detail::Figure f = detail::pose_figure(skel, height, rng);
    double min_x = 1e300, max_x = -1e300, min_y = 1e300, max_y = -1e300;
    for (const auto& j : f.joints) {
      min_x = std::min(min_x, j.x), max_x = std::max(max_x, j.x);
      min_y = std::min(min_y, j.y), max_y = std::max(max_y, j.y);
    }
    Point2 offset;
    if (p > 0 && u01(rng) < spec.overlap_prob) {
      // Drop one of this figure's joints onto a joint of the previous figure.
      const auto& prev = figures.back();
      const std::size_t target = std::uniform_int_distribution<std::size_t>(0, skel.size() - 1)(rng);
      const std::size_t mine = std::uniform_int_distribution<std::size_t>(0, skel.size() - 1)(rng);
      const double jitter = 0.5 * f.disc_radius();
      offset = {prev.joints[target].x - f.joints[mine].x + jitter * (2 * u01(rng) - 1),
                prev.joints[target].y - f.joints[mine].y + jitter * (2 * u01(rng) - 1)};
    } else {
      const double lo_x = -min_x, hi_x = w - 1 - max_x, lo_y = -min_y, hi_y = h - 1 - max_y;
      offset = {hi_x > lo_x ? lo_x + (hi_x - lo_x) * u01(rng) : 0.5 * (lo_x + hi_x),
                hi_y > lo_y ? lo_y + (hi_y - lo_y) * u01(rng) : 0.5 * (lo_y + hi_y)};
    }
    for (auto& j : f.joints) j = {j.x + offset.x, j.y + offset.y};

    const int base = static_cast<int>(p) * stride;
    const std::array<float, 3> limb_color{detail::quantize(0.45 + 0.3 * u01(rng)),
                                          detail::quantize(0.45 + 0.3 * u01(rng)),
                                          detail::quantize(0.45 + 0.3 * u01(rng))};
    for (auto [a, b] : skel.limbs) {
      canvas.segment(f.joints[a], f.joints[b], f.limb_half_width(), limb_color, base + stride - 1);
    }
    for (std::size_t j = 0; j < skel.size(); ++j) {
      canvas.disc(f.joints[j], f.disc_radius(), detail::joint_color(j, skel.size()), base + static_cast<int>(j));
    }
    figures.push_back(std::move(f));
  }

  Scene scene{canvas.image(), {}};
  for (std::size_t p = 0; p < figures.size(); ++p) {
    const auto& f = figures[p];
    PoseInstance inst;
    inst.id = static_cast<std::int64_t>(p) + 1;
    double min_x = 1e300, max_x = -1e300, min_y = 1e300, max_y = -1e300;
    for (std::size_t j = 0; j < skel.size(); ++j) {
      const Point2 q = f.joints[j];
      const int owner = canvas.owner_at(q);
      Keypoint kp{q.x, q.y, 2};
      if (owner == -2) {
        kp = {0, 0, 0};
      } else if (owner != static_cast<int>(p) * stride + static_cast<int>(j)) {
        kp.v = 1;
      }
      inst.keypoints.push_back(kp);
      const double r = f.disc_radius();
      min_x = std::min(min_x, q.x - r), max_x = std::max(max_x, q.x + r);
      min_y = std::min(min_y, q.y - r), max_y = std::max(max_y, q.y + r);
    }
    min_x = std::clamp(min_x, 0.0, w), max_x = std::clamp(max_x, 0.0, w);
    min_y = std::clamp(min_y, 0.0, h), max_y = std::clamp(max_y, 0.0, h);
    inst.bbox = {min_x, min_y, max_x - min_x, max_y - min_y};
    inst.area = inst.bbox.area();
    const Point2 a = f.joints[skel.head_pair.first], b = f.joints[skel.head_pair.second];
    inst.head_length = 0.6 * std::hypot(a.x - b.x, a.y - b.y);
    scene.persons.push_back(std::move(inst));
  }
  return scene;
}

/// Colour a generator disc for joint j would have.
inline std::array<float, 3> joint_color(std::size_t j, std::size_t k) { return detail::joint_color(j, k); }


/// A synthetic set: scene i uses seed derive_seed(spec.seed, i), image id i + 1
/// and file name NNNNNN.png; annotation ids run over the whole set.
struct SyntheticSet {
  Dataset dataset;
  std::vector<Image> images;
};

inline SyntheticSet generate_dataset(const SceneSpec& spec, std::size_t count, const Skeleton& skel) {
  SyntheticSet out;
  out.dataset.skeleton = skel;
  std::int64_t next_ann = 1;
  for (std::size_t i = 0; i < count; ++i) {
    SceneSpec s = spec;
    s.seed = derive_seed(spec.seed, i);
    Scene scene = generate_scene(s, skel);
    ImageRecord rec;
    rec.id = static_cast<std::int64_t>(i) + 1;
    char name[32];
    std::snprintf(name, sizeof name, "%06zu.png", i);
    rec.file_name = name;
    rec.width = spec.width;
    rec.height = spec.height;
    out.dataset.images.push_back(rec);
    for (auto& p : scene.persons) {
      p.id = next_ann++;
      p.image_id = rec.id;
      out.dataset.annotations.push_back(std::move(p));
    }
    out.images.push_back(std::move(scene.image));
  }
  return out;
}

}  // namespace dpit
