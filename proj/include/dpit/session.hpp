#pragma once

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "dpit/checkpoint.hpp"
#include "dpit/dataset.hpp"
#include "dpit/evaluate.hpp"
#include "dpit/image_io.hpp"
#include "dpit/train.hpp"

namespace dpit {

/// Training state plus the model and skeleton it belongs to.
inline Checkpoint checkpoint_of(const TrainState& s, const ModelConfig& model, const Skeleton& skel) {
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& l : s.curve) curve.push_back({l.step, l.epoch, l.lr, l.loss});
  nlohmann::json meta{{"config", to_json(model)},
                      {"skeleton", to_json(skel)},
                      {"epoch", s.epoch},
                      {"batch_in_epoch", s.batch_in_epoch},
                      {"step", s.step},
                      {"curve", std::move(curve)}};
  return {s.params, s.adam, std::move(meta)};
}

inline ModelConfig model_config_of(const Checkpoint& ck) {
  if (!ck.meta.contains("config")) throw ParseError("checkpoint carries no model config");
  return model_config_from_json(ck.meta.at("config"));
}

inline Skeleton skeleton_of(const Checkpoint& ck) {
  if (!ck.meta.contains("skeleton")) throw ParseError("checkpoint carries no skeleton");
  return skeleton_from_json(ck.meta.at("skeleton"));
}

inline TrainState train_state_of(const Checkpoint& ck) {
  if (!ck.adam) throw ConfigError("checkpoint has no optimiser state; cannot resume");
  TrainState s;
  s.params = ck.params;
  s.adam = *ck.adam;
  try {
    s.epoch = ck.meta.at("epoch").get<std::size_t>();
    s.batch_in_epoch = ck.meta.at("batch_in_epoch").get<std::size_t>();
    s.step = ck.meta.at("step").get<std::size_t>();
    for (const auto& row : ck.meta.at("curve")) {
      s.curve.push_back({row.at(0).get<std::size_t>(), row.at(1).get<std::size_t>(), row.at(2).get<double>(),
                         row.at(3).get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint progress fields: ") + e.what());
  }
  return s;
}

/// One loss-log line: step, epoch, lr, loss.
inline std::string format_step(const StepLog& l) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%zu %zu %.17g %.17g\n", l.step, l.epoch, l.lr, l.loss);
  return buf;
}

struct LoadedData {
  Dataset dataset;
  std::vector<LabelledImage> images;
};

/// Annotation JSON plus its PNGs. Without an image dir, `<json dir>/images` is used.
inline LoadedData load_labelled(const std::string& json_path, std::string image_dir,
                                std::optional<std::size_t> expected_k = std::nullopt) {
  LoadedData out;
  out.dataset = parse_coco(read_text(json_path), expected_k);
  if (image_dir.empty()) image_dir = (std::filesystem::path(json_path).parent_path() / "images").string();
  std::vector<Image> pixels;
  pixels.reserve(out.dataset.images.size());
  for (const auto& rec : out.dataset.images) {
    pixels.push_back(read_png((std::filesystem::path(image_dir) / rec.file_name).string()));
  }
  out.images = label_images(out.dataset, std::move(pixels));
  return out;
}

}  // namespace dpit
