#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dpit/model_config.hpp"
#include "dpit/scene.hpp"
#include "dpit/skeleton.hpp"
#include "dpit/train.hpp"

namespace dpit {

/// Everything a command needs. Values come from defaults, then the config
/// file, then --set overrides.
struct RunConfig {
  std::string preset = "dpit-tiny";
  ModelConfig model = preset_dpit_tiny();
  TrainConfig train;
  SceneSpec scene;
  std::string skeleton = "coco17";  // built-in name or path to a skeleton JSON
  std::string train_annotations;    // COCO keypoint JSON
  std::string image_dir;            // directory holding the file_name entries
  std::string out_dir = "runs/dpit";
  std::uint64_t seed = 0;
  std::size_t log_every = 1;
  std::size_t checkpoint_every = 1;  // epochs between checkpoints; 0 = final only

  RunConfig() {
    train.schedule = LrSchedule{};
    model.seed = seed;
  }
};

namespace detail {

inline std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + v[i];
  return out;
}

inline const std::string& single(const std::string& key, const std::vector<std::string>& v) {
  if (v.size() != 1) throw ConfigError(key + ": expected one value, got " + std::to_string(v.size()));
  return v[0];
}

inline std::uint64_t to_uint(const std::string& key, const std::string& s) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError(key + ": '" + s + "' is not a non-negative integer");
  return out;
}

inline double to_double(const std::string& key, const std::string& s) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw ConfigError(key + ": '" + s + "' is not a number");
  return v;
}

inline bool to_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError(key + ": '" + s + "' is not a boolean");
}

// Shortest text that reads back to the same double.
inline std::string fmt(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

}  // namespace detail

struct ConfigKey {
  std::string key;
  std::string doc;
  std::function<void(RunConfig&, const std::vector<std::string>&)> set;
  std::function<std::string(const RunConfig&)> get;
};

/// Every configurable field, in application order (model.preset first).
inline const std::vector<ConfigKey>& config_keys() {
  using V = std::vector<std::string>;
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    auto uint_key = [&](std::string key, std::string doc, auto member) {
      k.push_back({key, doc,
                   [key, member](RunConfig& c, const V& v) { member(c) = detail::to_uint(key, detail::single(key, v)); },
                   [member](const RunConfig& c) { return std::to_string(member(c)); }});
    };
    auto real_key = [&](std::string key, std::string doc, auto member) {
      k.push_back({key, doc,
                   [key, member](RunConfig& c, const V& v) { member(c) = detail::to_double(key, detail::single(key, v)); },
                   [member](const RunConfig& c) { return detail::fmt(member(c)); }});
    };
    auto text_key = [&](std::string key, std::string doc, auto member) {
      k.push_back({key, doc, [key, member](RunConfig& c, const V& v) { member(c) = detail::single(key, v); },
                   [member](const RunConfig& c) { return member(c); }});
    };
    auto pair_key = [&](std::string key, std::string doc, auto first, auto second) {
      k.push_back({key, doc,
                   [key, first, second](RunConfig& c, const V& v) {
                     if (v.size() != 2) throw ConfigError(key + ": expected [height, width]");
                     first(c) = detail::to_uint(key, v[0]);
                     second(c) = detail::to_uint(key, v[1]);
                   },
                   [first, second](const RunConfig& c) {
                     return std::to_string(first(c)) + ", " + std::to_string(second(c));
                   }});
    };
    auto list_key = [&](std::string key, std::string doc, auto member) {
      k.push_back({key, doc,
                   [key, member](RunConfig& c, const V& v) {
                     member(c).clear();
                     for (const auto& s : v) {
                       if (!s.empty()) member(c).push_back(detail::to_uint(key, s));
                     }
                   },
                   [member](const RunConfig& c) {
                     V parts;
                     for (auto x : member(c)) parts.push_back(std::to_string(x));
                     return detail::join(parts);
                   }});
    };

    k.push_back({"model.preset", "architecture preset: dpit-b, dpit-d6, dpit-d12, dpit-d16, dpit-tiny",
                 [](RunConfig& c, const V& v) {
                   c.preset = detail::single("model.preset", v);
                   const auto keep_k = c.model.keypoints;
                   c.model = preset(c.preset);
                   c.model.keypoints = keep_k;
                 },
                 [](const RunConfig& c) { return c.preset; }});
    uint_key("model.keypoints", "joints predicted (must match the skeleton)", [](auto& c) -> auto& { return c.model.keypoints; });
    uint_key("model.depth", "encoder layers", [](auto& c) -> auto& { return c.model.encoder.depth; });
    uint_key("model.heads", "attention heads", [](auto& c) -> auto& { return c.model.encoder.heads; });
    uint_key("model.hidden", "token width D", [](auto& c) -> auto& { return c.model.encoder.hidden; });
    uint_key("model.ffn_mult", "feed-forward width as a multiple of D", [](auto& c) -> auto& { return c.model.encoder.ffn_mult; });
    real_key("model.dropout", "dropout inside the encoder", [](auto& c) -> auto& { return c.model.encoder.dropout; });
    k.push_back({"model.channels", "backbone output channels C (both branches)",
                 [](RunConfig& c, const V& v) {
                   c.model.bu.out_channels = c.model.td.out_channels =
                       detail::to_uint("model.channels", detail::single("model.channels", v));
                 },
                 [](const RunConfig& c) { return std::to_string(c.model.bu.out_channels); }});
    list_key("model.bu_widths", "bottom-up stage widths (stride 2 each)", [](auto& c) -> auto& { return c.model.bu.widths; });
    list_key("model.td_widths", "top-down stage widths (stride 2 each)", [](auto& c) -> auto& { return c.model.td.widths; });
    pair_key("model.bu_input", "full-image input [H, W]", [](auto& c) -> auto& { return c.model.bu_height; },
             [](auto& c) -> auto& { return c.model.bu_width; });
    pair_key("model.td_input", "person crop input [H, W]", [](auto& c) -> auto& { return c.model.td_height; },
             [](auto& c) -> auto& { return c.model.td_width; });
    pair_key("model.bu_patch", "bottom-up patch size [h, w] on the feature map", [](auto& c) -> auto& { return c.model.bu_patch_h; },
             [](auto& c) -> auto& { return c.model.bu_patch_w; });
    pair_key("model.td_patch", "top-down patch size [h, w] on the feature map", [](auto& c) -> auto& { return c.model.td_patch_h; },
             [](auto& c) -> auto& { return c.model.td_patch_w; });
    pair_key("model.heatmap", "heatmap size [H, W]", [](auto& c) -> auto& { return c.model.heatmap_height; },
             [](auto& c) -> auto& { return c.model.heatmap_width; });

    uint_key("train.epochs", "total epochs", [](auto& c) -> auto& { return c.train.schedule.epochs; });
    list_key("train.drop_epochs", "epochs where the LR is multiplied by drop_factor", [](auto& c) -> auto& { return c.train.schedule.drop_epochs; });
    real_key("train.drop_factor", "LR multiplier at each drop", [](auto& c) -> auto& { return c.train.schedule.drop_factor; });
    real_key("train.lr", "initial learning rate", [](auto& c) -> auto& { return c.train.schedule.base_lr; });
    uint_key("train.batch_size", "persons per step", [](auto& c) -> auto& { return c.train.batch_size; });
    uint_key("train.max_steps", "stop after this many steps (0 = no cap)", [](auto& c) -> auto& { return c.train.max_steps; });
    real_key("train.sigma", "target Gaussian sigma in heatmap cells", [](auto& c) -> auto& { return c.train.sigma; });
    real_key("train.beta1", "Adam beta1", [](auto& c) -> auto& { return c.train.beta1; });
    real_key("train.beta2", "Adam beta2", [](auto& c) -> auto& { return c.train.beta2; });
    real_key("train.eps", "Adam epsilon", [](auto& c) -> auto& { return c.train.eps; });
    real_key("train.weight_decay", "L2 added to gradients (0 = off)", [](auto& c) -> auto& { return c.train.weight_decay; });
    real_key("train.grad_clip", "global gradient norm clip (0 = off)", [](auto& c) -> auto& { return c.train.grad_clip; });
    k.push_back({"train.augment", "random rotation / scale / flip",
                 [](RunConfig& c, const V& v) { c.train.augment.enabled = detail::to_bool("train.augment", detail::single("train.augment", v)); },
                 [](const RunConfig& c) { return std::string(c.train.augment.enabled ? "true" : "false"); }});
    real_key("train.rotation", "max rotation in degrees", [](auto& c) -> auto& { return c.train.augment.max_rotation_deg; });
    real_key("train.scale_min", "lower scale bound", [](auto& c) -> auto& { return c.train.augment.min_scale; });
    real_key("train.scale_max", "upper scale bound", [](auto& c) -> auto& { return c.train.augment.max_scale; });
    real_key("train.flip_prob", "horizontal flip probability", [](auto& c) -> auto& { return c.train.augment.flip_prob; });
    uint_key("train.log_every", "print every n-th step", [](auto& c) -> auto& { return c.log_every; });
    uint_key("train.checkpoint_every", "epochs between checkpoints (0 = final only)", [](auto& c) -> auto& { return c.checkpoint_every; });

    text_key("data.skeleton", "coco17, mpii16 or a skeleton JSON path", [](auto& c) -> auto& { return c.skeleton; });
    text_key("data.train", "COCO keypoint JSON used for training", [](auto& c) -> auto& { return c.train_annotations; });
    text_key("data.images", "directory with the images named in the JSON", [](auto& c) -> auto& { return c.image_dir; });

    uint_key("scene.width", "generated image width", [](auto& c) -> auto& { return c.scene.width; });
    uint_key("scene.height", "generated image height", [](auto& c) -> auto& { return c.scene.height; });
    uint_key("scene.min_persons", "fewest figures per scene", [](auto& c) -> auto& { return c.scene.min_persons; });
    uint_key("scene.max_persons", "most figures per scene", [](auto& c) -> auto& { return c.scene.max_persons; });
    real_key("scene.min_scale", "smallest figure height / image height", [](auto& c) -> auto& { return c.scene.min_scale; });
    real_key("scene.max_scale", "largest figure height / image height", [](auto& c) -> auto& { return c.scene.max_scale; });
    real_key("scene.overlap_prob", "chance a figure is dropped onto the previous one", [](auto& c) -> auto& { return c.scene.overlap_prob; });

    text_key("run.out", "output directory", [](auto& c) -> auto& { return c.out_dir; });
    k.push_back({"run.seed", "global seed (init, shuffling, augmentation, scenes)",
                 [](RunConfig& c, const V& v) { c.seed = detail::to_uint("run.seed", detail::single("run.seed", v)); },
                 [](const RunConfig& c) { return std::to_string(c.seed); }});
    return k;
  }();
  return keys;
}

/// key -> raw values. Later sources replace earlier ones key by key.
using ConfigValues = std::map<std::string, std::vector<std::string>>;

/// TOML-style text: [section] headers, key = value, arrays, # comments.
inline ConfigValues parse_config_text(const std::string& text) {
  std::istringstream in(text);
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigTOML().from_config(in);
  } catch (const CLI::Error& e) {
    throw ConfigError(std::string("config file: ") + e.what());
  }
  ConfigValues out;
  for (const auto& it : items) {
    if (it.name == "++" || it.name == "--") continue;
    auto& values = out[it.fullname()];
    for (auto v : it.inputs) {
      const auto a = v.find_first_not_of(" \t"), b = v.find_last_not_of(" \t");
      values.push_back(a == std::string::npos ? std::string() : v.substr(a, b - a + 1));
    }
  }
  return out;
}

/// "section.key=value" or "section.key=[a, b]".
inline std::pair<std::string, std::vector<std::string>> parse_override(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + s + "' must look like section.key=value");
  auto trim = [](std::string x) {
    const auto a = x.find_first_not_of(" \t");
    const auto b = x.find_last_not_of(" \t");
    return a == std::string::npos ? std::string() : x.substr(a, b - a + 1);
  };
  const std::string key = trim(s.substr(0, eq));
  std::string value = trim(s.substr(eq + 1));
  std::vector<std::string> values;
  if (value.size() >= 2 && value.front() == '[' && value.back() == ']') {
    std::stringstream ss(value.substr(1, value.size() - 2));
    std::string part;
    while (std::getline(ss, part, ',')) {
      part = trim(part);
      if (!part.empty()) values.push_back(part);
    }
  } else {
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    values.push_back(value);
  }
  return {key, values};
}

/// defaults < file < overrides. Unknown keys are errors. When the epoch
/// count changes but drop epochs are not given, the reference drops are
/// rescaled proportionally.
inline RunConfig resolve_config(const ConfigValues& file, const std::vector<std::string>& overrides) {
  ConfigValues merged = file;
  for (const auto& o : overrides) {
    auto [k, v] = parse_override(o);
    merged[k] = v;
  }
  std::map<std::string, const ConfigKey*> known;
  for (const auto& k : config_keys()) known[k.key] = &k;
  for (const auto& [k, _] : merged) {
    if (!known.contains(k)) throw ConfigError("unknown config key '" + k + "'");
  }
  RunConfig c;
  for (const auto& k : config_keys()) {
    auto it = merged.find(k.key);
    if (it != merged.end()) k.set(c, it->second);
  }
  if (merged.contains("train.epochs") && !merged.contains("train.drop_epochs")) {
    const LrSchedule given = c.train.schedule;
    c.train.schedule = LrSchedule{}.scaled_to(given.epochs);
    c.train.schedule.base_lr = given.base_lr;
    c.train.schedule.drop_factor = given.drop_factor;
  }
  c.model.seed = c.seed;
  c.train.seed = c.seed;
  c.scene.seed = c.seed;
  return c;
}

/// With `check_inputs`, data.train and data.images must exist.
inline RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides,
                                 bool check_inputs = true) {
  ConfigValues file;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    file = parse_config_text(ss.str());
  }
  RunConfig c = resolve_config(file, overrides);
  for (const auto& p : {c.train_annotations, c.image_dir}) {
    if (check_inputs && !p.empty() && !std::filesystem::exists(p)) throw ConfigError("configured path does not exist: " + p);
  }
  return c;
}

/// Effective configuration in the same format the loader reads.
inline std::string dump_config(const RunConfig& c) {
  std::string out;
  std::string section;
  for (const auto& k : config_keys()) {
    const auto dot = k.key.find('.');
    const std::string sec = k.key.substr(0, dot), name = k.key.substr(dot + 1);
    if (sec != section) {
      out += (section.empty() ? "" : "\n") + std::string("[") + sec + "]\n";
      section = sec;
    }
    std::string value = k.get(c);
    const bool text = k.key == "model.preset" || k.key.starts_with("data.") || k.key == "run.out";
    const bool list = k.key.ends_with("_widths") || k.key.ends_with("drop_epochs") || k.key.ends_with("_input") ||
                      k.key.ends_with("_patch") || k.key == "model.heatmap";
    if (text) value = "\"" + value + "\"";
    if (list) value = "[" + value + "]";
    out += name + " = " + value + "  # " + k.doc + "\n";
  }
  return out;
}

inline Skeleton resolve_skeleton(const std::string& name_or_path) {
  if (name_or_path == "coco17" || name_or_path == "mpii16") return skeleton_by_name(name_or_path);
  if (!std::filesystem::exists(name_or_path)) {
    throw ConfigError("skeleton '" + name_or_path + "' is neither coco17, mpii16 nor an existing file");
  }
  return load_skeleton(name_or_path);
}

}  // namespace dpit
