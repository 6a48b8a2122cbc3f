#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dpit/geometry.hpp"
#include "dpit/skeleton.hpp"
#include "json.hpp"

namespace dpit {

/// v: 0 unlabeled / out of frame, 1 labeled but occluded, 2 visible.
struct Keypoint {
  double x = 0, y = 0;
  int v = 0;

  friend bool operator==(const Keypoint&, const Keypoint&) = default;
};

/// One person: K keypoints plus box, in image pixels.
struct PoseInstance {
  std::int64_t id = 0;
  std::int64_t image_id = 0;
  std::vector<Keypoint> keypoints;
  BBox bbox;
  double area = 0;
  double head_length = 0;  // 0 when unknown

  std::size_t visible_count() const {
    std::size_t n = 0;
    for (const auto& k : keypoints) n += k.v > 0;
    return n;
  }

  friend bool operator==(const PoseInstance& a, const PoseInstance& b) {
    return a.id == b.id && a.image_id == b.image_id && a.keypoints == b.keypoints && a.bbox.x == b.bbox.x &&
           a.bbox.y == b.bbox.y && a.bbox.w == b.bbox.w && a.bbox.h == b.bbox.h && a.area == b.area &&
           a.head_length == b.head_length;
  }
};

struct ImageRecord {
  std::int64_t id = 0;
  std::string file_name;
  std::size_t width = 0, height = 0;

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

/// COCO keypoint subset: images, person annotations and the joint layout.
struct Dataset {
  std::vector<ImageRecord> images;
  std::vector<PoseInstance> annotations;
  std::optional<Skeleton> skeleton;  // from the person category, when present

  /// Annotation indices per image id, images in file order.
  std::vector<std::pair<std::int64_t, std::vector<std::size_t>>> grouped() const {
    std::map<std::int64_t, std::vector<std::size_t>> by_image;
    for (std::size_t i = 0; i < annotations.size(); ++i) by_image[annotations[i].image_id].push_back(i);
    std::vector<std::pair<std::int64_t, std::vector<std::size_t>>> out;
    for (const auto& img : images) {
      auto it = by_image.find(img.id);
      out.emplace_back(img.id, it == by_image.end() ? std::vector<std::size_t>{} : it->second);
    }
    return out;
  }

  const ImageRecord& image(std::int64_t id) const {
    for (const auto& im : images) {
      if (im.id == id) return im;
    }
    throw ConfigError("unknown image id " + std::to_string(id));
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

namespace detail {

inline std::vector<Keypoint> parse_triples(const nlohmann::json& flat, std::size_t k, const std::string& who) {
  if (!flat.is_array() || flat.size() != 3 * k) {
    throw ParseError(who + ": keypoints has " + std::to_string(flat.is_array() ? flat.size() : 0) +
                     " values, expected 3 x " + std::to_string(k) + " = " + std::to_string(3 * k));
  }
  std::vector<Keypoint> kps(k);
  for (std::size_t i = 0; i < k; ++i) {
    kps[i].x = flat[3 * i].get<double>();
    kps[i].y = flat[3 * i + 1].get<double>();
    kps[i].v = static_cast<int>(flat[3 * i + 2].get<double>());
  }
  return kps;
}

inline nlohmann::json flatten(const std::vector<Keypoint>& kps) {
  auto flat = nlohmann::json::array();
  for (const auto& kp : kps) {
    flat.push_back(kp.x);
    flat.push_back(kp.y);
    flat.push_back(kp.v);
  }
  return flat;
}

}  // namespace detail

/// Parses the COCO keypoint subset. K comes from the person category's
/// keypoint names when present, else from `expected_k`, else from the
/// first annotation.
inline Dataset parse_coco(const std::string& text, std::optional<std::size_t> expected_k = std::nullopt) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("images") || !j.contains("annotations") || !j["images"].is_array() ||
      !j["annotations"].is_array()) {
    throw ParseError("COCO file needs \"images\" and \"annotations\" arrays");
  }
  Dataset ds;
  try {
    if (j.contains("categories") && j["categories"].is_array() && !j["categories"].empty()) {
      const auto& cat = j["categories"][0];
      if (cat.contains("keypoints")) {
        Skeleton s;
        s.name = cat.value("skeleton_name", cat.value("name", std::string("person")));
        s.joints = cat["keypoints"].get<std::vector<std::string>>();
        if (cat.contains("skeleton")) {
          for (const auto& l : cat["skeleton"]) {
            s.limbs.emplace_back(l.at(0).get<std::size_t>() - 1, l.at(1).get<std::size_t>() - 1);
          }
        }
        if (cat.contains("swap_pairs")) {
          for (const auto& p : cat["swap_pairs"]) s.swap_pairs.emplace_back(p.at(0).get<std::size_t>(), p.at(1).get<std::size_t>());
        }
        if (cat.contains("sigmas")) s.sigmas = cat["sigmas"].get<std::vector<double>>();
        if (cat.contains("head_pair")) {
          s.head_pair = {cat["head_pair"].at(0).get<std::size_t>(), cat["head_pair"].at(1).get<std::size_t>()};
        }
        ds.skeleton = s;
      }
    }
    for (const auto& im : j["images"]) {
      ImageRecord r;
      r.id = im.at("id").get<std::int64_t>();
      r.file_name = im.value("file_name", std::string());
      r.width = im.value("width", std::size_t{0});
      r.height = im.value("height", std::size_t{0});
      ds.images.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("COCO header: ") + e.what());
  }
  std::optional<std::size_t> k = ds.skeleton ? std::optional{ds.skeleton->size()} : expected_k;
  for (const auto& a : j["annotations"]) {
    const std::string who = "annotation " + (a.contains("id") ? a["id"].dump() : std::string("<no id>"));
    try {
      PoseInstance p;
      p.id = a.at("id").get<std::int64_t>();
      p.image_id = a.at("image_id").get<std::int64_t>();
      const auto& flat = a.at("keypoints");
      if (!k) {
        if (!flat.is_array() || flat.size() % 3 != 0 || flat.empty()) {
          throw ParseError(who + ": keypoints length is not a positive multiple of 3");
        }
        k = flat.size() / 3;
      }
      p.keypoints = detail::parse_triples(flat, *k, who);
      const auto& b = a.at("bbox");
      if (!b.is_array() || b.size() != 4) throw ParseError(who + ": bbox must be [x, y, w, h]");
      p.bbox = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
      p.area = a.at("area").get<double>();
      p.head_length = a.value("head_length", 0.0);
      ds.annotations.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(who + ": " + e.what());
    }
  }
  return ds;
}

inline nlohmann::json to_json(const Dataset& ds) {
  nlohmann::json j;
  j["images"] = nlohmann::json::array();
  for (const auto& im : ds.images) {
    j["images"].push_back({{"id", im.id}, {"file_name", im.file_name}, {"width", im.width}, {"height", im.height}});
  }
  j["annotations"] = nlohmann::json::array();
  for (const auto& a : ds.annotations) {
    nlohmann::json o{{"id", a.id},
                     {"image_id", a.image_id},
                     {"category_id", 1},
                     {"iscrowd", 0},
                     {"keypoints", detail::flatten(a.keypoints)},
                     {"num_keypoints", a.visible_count()},
                     {"bbox", {a.bbox.x, a.bbox.y, a.bbox.w, a.bbox.h}},
                     {"area", a.area}};
    if (a.head_length > 0) o["head_length"] = a.head_length;
    j["annotations"].push_back(std::move(o));
  }
  j["categories"] = nlohmann::json::array();
  if (ds.skeleton) {
    const Skeleton& s = *ds.skeleton;
    nlohmann::json cat{{"id", 1}, {"name", "person"}, {"skeleton_name", s.name}, {"keypoints", s.joints}};
    cat["skeleton"] = nlohmann::json::array();
    for (auto [a, b] : s.limbs) cat["skeleton"].push_back({a + 1, b + 1});
    cat["swap_pairs"] = nlohmann::json::array();
    for (auto [a, b] : s.swap_pairs) cat["swap_pairs"].push_back({a, b});
    cat["sigmas"] = s.sigmas;
    cat["head_pair"] = {s.head_pair.first, s.head_pair.second};
    j["categories"].push_back(std::move(cat));
  }
  return j;
}

inline std::string serialize_coco(const Dataset& ds) { return to_json(ds).dump(1) + "\n"; }

/// One keypoint result per person; annotation_id ties it to the box it came from.
struct Prediction {
  std::int64_t image_id = 0;
  std::int64_t annotation_id = -1;
  std::vector<Keypoint> keypoints;  // v carries no meaning here; written as 1
  double score = 0;

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

inline std::string serialize_predictions(const std::vector<Prediction>& preds) {
  auto j = nlohmann::json::array();
  for (const auto& p : preds) {
    nlohmann::json o{{"image_id", p.image_id}, {"category_id", 1}, {"keypoints", detail::flatten(p.keypoints)},
                     {"score", p.score}};
    if (p.annotation_id >= 0) o["annotation_id"] = p.annotation_id;
    j.push_back(std::move(o));
  }
  return j.dump(1) + "\n";
}

inline std::vector<Prediction> parse_predictions(const std::string& text, std::size_t k) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed predictions JSON: ") + e.what());
  }
  if (!j.is_array()) throw ParseError("predictions file must be a JSON array");
  std::vector<Prediction> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& o = j[i];
    const std::string who = "prediction " + std::to_string(i);
    try {
      Prediction p;
      p.image_id = o.at("image_id").get<std::int64_t>();
      p.annotation_id = o.value("annotation_id", std::int64_t{-1});
      p.keypoints = detail::parse_triples(o.at("keypoints"), k, who);
      p.score = o.at("score").get<double>();
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(who + ": " + e.what());
    }
  }
  return out;
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out << text;
  if (!out) throw ConfigError("failed writing " + path);
}

}  // namespace dpit
