#pragma once

#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dpit/backbones.hpp"
#include "dpit/encoder.hpp"
#include "dpit/geometry.hpp"
#include "dpit/heatmap.hpp"
#include "dpit/model_config.hpp"
#include "dpit/tokenizer.hpp"

namespace dpit {

/// Learned weights of the whole network, in a fixed registration order:
/// backbones, token projections, branch embeddings, keypoint queries,
/// encoder layers, head.
template <typename T>
ParameterSet<T> init_model_params(const ModelConfig& cfg) {
  cfg.validate();
  ParameterSet<T> p;
  std::mt19937_64 rng(derive_seed(cfg.seed, 0));
  add_backbone_params(p, "bu", cfg.bu, 3, rng);
  add_backbone_params(p, "td", cfg.td, 3, rng);
  const std::size_t d = cfg.encoder.hidden, c = cfg.bu.out_channels;
  const std::size_t bu_dim = cfg.bu_patch_h * cfg.bu_patch_w * c, td_dim = cfg.td_patch_h * cfg.td_patch_w * c;
  p.add("tok.bu.proj", normal_tensor<T>({bu_dim, d}, static_cast<T>(1.0 / std::sqrt(double(bu_dim))), rng));
  p.add("tok.td.proj", normal_tensor<T>({td_dim, d}, static_cast<T>(1.0 / std::sqrt(double(td_dim))), rng));
  p.add("tok.bu.branch", normal_tensor<T>({d}, static_cast<T>(0.02), rng));
  p.add("tok.td.branch", normal_tensor<T>({d}, static_cast<T>(0.02), rng));
  p.add("kpt.queries", make_keypoint_queries<T>(cfg.keypoints, d, derive_seed(cfg.seed, 1)));
  add_encoder_params(p, cfg.encoder, rng);
  p.add("head.ln_g", Tensor<T>({d}, T(1)));
  p.add("head.ln_b", Tensor<T>({d}));
  p.add("head.w", normal_tensor<T>({d, cfg.heatmap_height * cfg.heatmap_width}, static_cast<T>(0.02), rng));
  p.add("head.b", Tensor<T>({cfg.heatmap_height * cfg.heatmap_width}));
  return p;
}

template <typename T>
struct ForwardOptions {
  bool mask_bu = false;  // replace BU tokens by zeros (sequence length unchanged)
  bool drop_bu = false;  // leave BU tokens out of the sequence entirely
  const AttentionObserver<T>* observer = nullptr;
  std::mt19937_64* dropout_rng = nullptr;
};

/// Stateless composition of the modules for one configuration; weights are
/// passed in bound to a tape.
template <typename T>
class DpitModel {
 public:
  explicit DpitModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    bu_grid_ = {cfg_.bu_patch_h, cfg_.bu_patch_w, cfg_.bu_feature_h(), cfg_.bu_feature_w(), cfg_.bu.out_channels};
    td_grid_ = {cfg_.td_patch_h, cfg_.td_patch_w, cfg_.td_feature_h(), cfg_.td_feature_w(), cfg_.td.out_channels};
    bu_pos_ = sincos_positions<T>(bu_grid_.rows(), bu_grid_.cols(), cfg_.encoder.hidden);
    td_pos_ = sincos_positions<T>(td_grid_.rows(), td_grid_.cols(), cfg_.encoder.hidden);
    hm_geometry_ = HeatmapGeometry::for_crop(cfg_.heatmap_height, cfg_.heatmap_width, cfg_.td_height, cfg_.td_width);
  }

  const ModelConfig& config() const { return cfg_; }
  const HeatmapGeometry& heatmap_geometry() const { return hm_geometry_; }

  /// N1 x D tokens for one bu_height x bu_width image.
  Var<T> bu_tokens(const BoundParams<T>& p, Var<T> image) const {
    auto feat = encode_bu(p, cfg_.bu, image);
    return embed_tokens(split_patches(feat, bu_grid_), p["tok.bu.proj"], bu_pos_, p["tok.bu.branch"]);
  }

  /// N2 x D tokens for one td_height x td_width crop.
  Var<T> td_tokens(const BoundParams<T>& p, Var<T> crop) const {
    auto feat = encode_td(p, cfg_.td, crop);
    return embed_tokens(split_patches(feat, td_grid_), p["tok.td.proj"], td_pos_, p["tok.td.branch"]);
  }

  /// Encoder output for one person (full sequence, before the head).
  TokenSequence<T> encode_person(const BoundParams<T>& p, std::optional<Var<T>> bu, Var<T> crop,
                                 const ForwardOptions<T>& opt = {}) const {
    if (opt.drop_bu) {
      bu.reset();
    } else if (opt.mask_bu && bu) {
      bu = crop.tape().constant(Tensor<T>(bu->shape()));
    }
    auto seq = assemble(p["kpt.queries"], bu, td_tokens(p, crop));
    std::vector<EncoderLayerWeights<T>> layers;
    layers.reserve(cfg_.encoder.depth);
    for (std::size_t l = 0; l < cfg_.encoder.depth; ++l) layers.push_back(bind_layer(p, l));
    return encode(seq, layers, cfg_.encoder, opt.observer, opt.dropout_rng);
  }

  /// K x (H*W) heatmap rows computed from the keypoint rows only.
  Var<T> head(const BoundParams<T>& p, Var<T> keypoint_rows) const {
    auto h = ops::layer_norm(keypoint_rows, p["head.ln_g"], p["head.ln_b"]);
    return ops::add_bias(project_keypoints(h, p["head.w"], hm_geometry_), p["head.b"]);
  }

  Var<T> person_heatmaps(const BoundParams<T>& p, std::optional<Var<T>> bu, Var<T> crop,
                         const ForwardOptions<T>& opt = {}) const {
    auto seq = encode_person(p, bu, crop, opt);
    return head(p, ops::slice_rows(seq.tokens, 0, cfg_.keypoints));
  }

  /// All persons of one image share a single BU pass.
  std::vector<Var<T>> forward_group(const BoundParams<T>& p, Var<T> bu_image, const std::vector<Var<T>>& crops,
                                    const ForwardOptions<T>& opt = {}) const {
    std::optional<Var<T>> bu;
    if (!opt.drop_bu) bu = bu_tokens(p, bu_image);
    std::vector<Var<T>> out;
    out.reserve(crops.size());
    for (const auto& c : crops) out.push_back(person_heatmaps(p, bu, c, opt));
    return out;
  }

 private:
  ModelConfig cfg_;
  PatchGrid bu_grid_, td_grid_;
  Tensor<T> bu_pos_, td_pos_;
  HeatmapGeometry hm_geometry_;
};

/// Keypoints of one person in original image pixels.
struct PersonPrediction {
  std::vector<Point2> keypoints;
  std::vector<double> scores;
  double score = 0;  // mean of per-keypoint peaks
};

/// Letterboxed BU input and one crop per box, with the crop transforms.
struct PreparedImage {
  Image bu_input;
  std::vector<Crop> crops;
};

inline PreparedImage prepare_image(const ModelConfig& cfg, const Image& image, const std::vector<BBox>& boxes) {
  PreparedImage out{resize_full(image, cfg.bu_height, cfg.bu_width).image, {}};
  out.crops.reserve(boxes.size());
  for (const auto& b : boxes) out.crops.push_back(crop_to_input(image, b, cfg.td_height, cfg.td_width));
  return out;
}

/// Ground-truth boxes in, image-space keypoints out; no gradient tape records.
template <typename T>
std::vector<PersonPrediction> predict_image(const DpitModel<T>& model, const ParameterSet<T>& params,
                                            const Image& image, const std::vector<BBox>& boxes,
                                            const ForwardOptions<T>& opt = {}, bool refine = true) {
  if (boxes.empty()) return {};
  const PreparedImage prep = prepare_image(model.config(), image, boxes);
  Tape<T> tape;
  BoundParams<T> bound(tape, params, false);
  std::vector<Var<T>> crops;
  for (const auto& c : prep.crops) crops.push_back(tape.constant(c.image.template cast<T>()));
  auto rows = model.forward_group(bound, tape.constant(prep.bu_input.template cast<T>()), crops, opt);
  std::vector<PersonPrediction> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto hm = Heatmap<T>::from_channel_major(rows[i].value(), model.heatmap_geometry());
    auto decoded = decode(hm, refine);
    std::vector<Point2> crop_pts;
    PersonPrediction pred;
    for (const auto& d : decoded) {
      crop_pts.push_back({d.x, d.y});
      pred.scores.push_back(d.score);
      pred.score += d.score / static_cast<double>(decoded.size());
    }
    pred.keypoints = to_image_coords(crop_pts, prep.crops[i].transform);
    out.push_back(std::move(pred));
  }
  return out;
}

}  // namespace dpit
