#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dpit/augment.hpp"
#include "dpit/metrics.hpp"
#include "dpit/model.hpp"

namespace dpit {

/// An image with its ground-truth persons, as fed to training and inference.
struct LabelledImage {
  std::int64_t image_id = 0;
  Sample sample;
};

inline std::vector<Sample> samples_of(const std::vector<LabelledImage>& images) {
  std::vector<Sample> out;
  out.reserve(images.size());
  for (const auto& im : images) out.push_back(im.sample);
  return out;
}

/// Joins a parsed dataset with its decoded images (same order as ds.images).
inline std::vector<LabelledImage> label_images(const Dataset& ds, std::vector<Image> images) {
  if (images.size() != ds.images.size()) throw DimensionError("label_images: one image per record required");
  std::vector<LabelledImage> out;
  std::map<std::int64_t, std::size_t> index;
  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    index[ds.images[i].id] = i;
    out.push_back({ds.images[i].id, {std::move(images[i]), {}}});
  }
  for (const auto& a : ds.annotations) {
    auto it = index.find(a.image_id);
    if (it == index.end()) throw ConfigError("annotation " + std::to_string(a.id) + " refers to unknown image " +
                                             std::to_string(a.image_id));
    out[it->second].sample.persons.push_back(a);
  }
  return out;
}

/// Ground-truth boxes in, one prediction per person with a usable box.
template <typename T>
std::vector<Prediction> predict_images(const DpitModel<T>& model, const ParameterSet<T>& params,
                                       const std::vector<LabelledImage>& images, const ForwardOptions<T>& opt = {}) {
  std::vector<Prediction> out;
  for (const auto& im : images) {
    std::vector<BBox> boxes;
    std::vector<std::int64_t> ids;
    for (const auto& p : im.sample.persons) {
      if (!(p.bbox.w > 0) || !(p.bbox.h > 0)) continue;
      boxes.push_back(p.bbox);
      ids.push_back(p.id);
    }
    const auto preds = predict_image(model, params, im.sample.image, boxes, opt);
    for (std::size_t i = 0; i < preds.size(); ++i) {
      Prediction p{im.image_id, ids[i], {}, preds[i].score};
      for (const auto& k : preds[i].keypoints) p.keypoints.push_back({k.x, k.y, 1});
      out.push_back(std::move(p));
    }
  }
  return out;
}

/// Mean distance between decoded and labelled (v > 0) keypoints, measured in
/// heatmap cells of each person's own crop.
inline double mean_cell_error(const ModelConfig& cfg, const std::vector<LabelledImage>& images,
                              const std::vector<Prediction>& preds) {
  std::map<std::int64_t, const Prediction*> by_ann;
  for (const auto& p : preds) by_ann[p.annotation_id] = &p;
  const double stride = static_cast<double>(cfg.td_height) / static_cast<double>(cfg.heatmap_height);
  double sum = 0;
  std::size_t n = 0;
  for (const auto& im : images) {
    for (const auto& gt : im.sample.persons) {
      auto it = by_ann.find(gt.id);
      if (it == by_ann.end()) continue;
      const double scale = crop_transform(gt.bbox, cfg.td_height, cfg.td_width).m00;
      for (std::size_t j = 0; j < gt.keypoints.size(); ++j) {
        if (gt.keypoints[j].v <= 0) continue;
        const auto& k = it->second->keypoints[j];
        sum += std::hypot(k.x - gt.keypoints[j].x, k.y - gt.keypoints[j].y) * scale / stride;
        ++n;
      }
    }
  }
  if (n == 0) throw NumericError("mean_cell_error: no labelled keypoints with predictions");
  return sum / static_cast<double>(n);
}

inline std::vector<GtInstance> ground_truth_of(const std::vector<LabelledImage>& images) {
  std::vector<GtInstance> out;
  for (const auto& im : images) {
    for (const auto& p : im.sample.persons) out.push_back(to_gt(p));
  }
  return out;
}

inline std::vector<PredInstance> predictions_of(const std::vector<Prediction>& preds) {
  std::vector<PredInstance> out;
  out.reserve(preds.size());
  for (const auto& p : preds) out.push_back(to_pred(p));
  return out;
}

}  // namespace dpit
