#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dpit/error.hpp"
#include "json.hpp"

namespace dpit {

/// Joint layout shared by the generator, augmentation, metrics and model.
struct Skeleton {
  std::string name;
  std::vector<std::string> joints;
  std::vector<std::pair<std::size_t, std::size_t>> swap_pairs;  // left/right counterparts
  std::vector<double> sigmas;                                   // per-joint OKS sigma; k_i = 2 sigma_i
  std::pair<std::size_t, std::size_t> head_pair{0, 0};
  std::vector<std::pair<std::size_t, std::size_t>> limbs;

  std::size_t size() const { return joints.size(); }

  /// Index permutation applied to keypoints on a horizontal flip.
  std::vector<std::size_t> flip_permutation() const {
    std::vector<std::size_t> perm(size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    for (auto [a, b] : swap_pairs) std::swap(perm[a], perm[b]);
    return perm;
  }

  void validate() const {
    const std::size_t k = size();
    if (k == 0) throw ConfigError("skeleton '" + name + "' has no joints");
    if (sigmas.size() != k) throw ConfigError("skeleton '" + name + "': sigmas length differs from joint count");
    for (double s : sigmas) {
      if (!(s > 0)) throw ConfigError("skeleton '" + name + "': sigmas must be positive");
    }
    std::vector<int> seen(k, 0);
    for (auto [a, b] : swap_pairs) {
      if (a >= k || b >= k || a == b) throw ConfigError("skeleton '" + name + "': bad swap pair");
      if (seen[a]++ || seen[b]++) throw ConfigError("skeleton '" + name + "': joint appears in two swap pairs");
    }
    for (auto [a, b] : limbs) {
      if (a >= k || b >= k) throw ConfigError("skeleton '" + name + "': limb references unknown joint");
    }
    if (head_pair.first >= k || head_pair.second >= k || head_pair.first == head_pair.second) {
      throw ConfigError("skeleton '" + name + "': bad head pair");
    }
  }

  friend bool operator==(const Skeleton&, const Skeleton&) = default;
};

/// 17-joint layout with the usual per-joint sigmas; head length from the ears.
inline Skeleton coco17() {
  Skeleton s;
  s.name = "coco17";
  s.joints = {"nose",       "left_eye",       "right_eye",      "left_ear",    "right_ear",   "left_shoulder",
              "right_shoulder", "left_elbow", "right_elbow",    "left_wrist",  "right_wrist", "left_hip",
              "right_hip",  "left_knee",      "right_knee",     "left_ankle",  "right_ankle"};
  s.swap_pairs = {{1, 2}, {3, 4}, {5, 6}, {7, 8}, {9, 10}, {11, 12}, {13, 14}, {15, 16}};
  s.sigmas = {0.026, 0.025, 0.025, 0.035, 0.035, 0.079, 0.079, 0.072, 0.072,
              0.062, 0.062, 0.107, 0.107, 0.087, 0.087, 0.089, 0.089};
  s.head_pair = {3, 4};
  s.limbs = {{15, 13}, {13, 11}, {16, 14}, {14, 12}, {11, 12}, {5, 11}, {6, 12}, {5, 6}, {5, 7}, {6, 8},
             {7, 9},   {8, 10},  {1, 2},   {0, 1},   {0, 2},   {1, 3},  {2, 4},  {3, 5}, {4, 6}};
  return s;
}

/// 16-joint layout; head length from upper neck to head top.
inline Skeleton mpii16() {
  Skeleton s;
  s.name = "mpii16";
  s.joints = {"right_ankle", "right_knee", "right_hip",  "left_hip",       "left_knee",     "left_ankle",
              "pelvis",      "thorax",     "upper_neck", "head_top",       "right_wrist",   "right_elbow",
              "right_shoulder", "left_shoulder", "left_elbow", "left_wrist"};
  s.swap_pairs = {{0, 5}, {1, 4}, {2, 3}, {10, 15}, {11, 14}, {12, 13}};
  s.sigmas = {0.089, 0.087, 0.107, 0.107, 0.087, 0.089, 0.107, 0.079,
              0.079, 0.035, 0.062, 0.072, 0.079, 0.079, 0.072, 0.062};
  s.head_pair = {8, 9};
  s.limbs = {{0, 1}, {1, 2}, {2, 6}, {3, 6}, {3, 4}, {4, 5}, {6, 7}, {7, 8},
             {8, 9}, {10, 11}, {11, 12}, {12, 7}, {13, 7}, {13, 14}, {14, 15}};
  return s;
}

inline Skeleton skeleton_by_name(const std::string& name) {
  if (name == "coco17") return coco17();
  if (name == "mpii16") return mpii16();
  throw ConfigError("unknown skeleton '" + name + "' (expected coco17 or mpii16)");
}

inline nlohmann::json to_json(const Skeleton& s) {
  nlohmann::json j;
  j["name"] = s.name;
  j["K"] = s.size();
  j["joints"] = s.joints;
  j["swap_pairs"] = nlohmann::json::array();
  for (auto [a, b] : s.swap_pairs) j["swap_pairs"].push_back({a, b});
  j["sigmas"] = s.sigmas;
  j["head_pair"] = {s.head_pair.first, s.head_pair.second};
  j["limbs"] = nlohmann::json::array();
  for (auto [a, b] : s.limbs) j["limbs"].push_back({a, b});
  return j;
}

inline Skeleton skeleton_from_json(const nlohmann::json& j) {
  Skeleton s;
  try {
    s.name = j.at("name").get<std::string>();
    s.joints = j.at("joints").get<std::vector<std::string>>();
    for (const auto& p : j.at("swap_pairs")) s.swap_pairs.emplace_back(p.at(0).get<std::size_t>(), p.at(1).get<std::size_t>());
    s.sigmas = j.at("sigmas").get<std::vector<double>>();
    s.head_pair = {j.at("head_pair").at(0).get<std::size_t>(), j.at("head_pair").at(1).get<std::size_t>()};
    for (const auto& p : j.at("limbs")) s.limbs.emplace_back(p.at(0).get<std::size_t>(), p.at(1).get<std::size_t>());
    if (j.contains("K") && j.at("K").get<std::size_t>() != s.joints.size()) {
      throw ParseError("skeleton K does not match the joint list");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("skeleton file: ") + e.what());
  }
  s.validate();
  return s;
}

inline Skeleton load_skeleton(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open skeleton file " + path);
  try {
    return skeleton_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("skeleton file " + path + ": " + e.what());
  }
}

inline void save_skeleton(const Skeleton& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write skeleton file " + path);
  out << to_json(s).dump(2) << "\n";
}

}  // namespace dpit
