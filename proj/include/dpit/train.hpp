#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dpit/augment.hpp"
#include "dpit/model.hpp"
#include "dpit/optim.hpp"
#include "dpit/skeleton.hpp"

namespace dpit {

struct TrainConfig {
  LrSchedule schedule;
  std::size_t batch_size = 8;
  std::size_t max_steps = 0;  // 0 = run every epoch
  AugmentConfig augment;
  double sigma = 2.0;  // ground-truth Gaussian, heatmap cells
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double weight_decay = 0.0;
  double grad_clip = 0.0;  // global L2 norm; 0 = off
  std::uint64_t seed = 0;

  void validate() const {
    schedule.validate();
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    if (!(sigma > 0)) throw ConfigError("sigma must be positive");
    if (weight_decay < 0 || grad_clip < 0) throw ConfigError("weight decay and clip must be non-negative");
  }
};

struct StepLog {
  std::size_t step = 0, epoch = 0;
  double lr = 0, loss = 0;
};

/// Everything needed to continue a run bit-exactly.
struct TrainState {
  ParameterSet<float> params;
  AdamState<float> adam;
  std::size_t epoch = 0;           // epoch in progress (or next to start)
  std::size_t batch_in_epoch = 0;  // batches of `epoch` already applied
  std::size_t step = 0;
  std::vector<StepLog> curve;
};

class TrainingAborted : public NumericError {
 public:
  TrainingAborted(const std::string& what, StepLog at) : NumericError(what), at_(at) {}
  const StepLog& at() const { return at_; }

 private:
  StepLog at_;
};

struct TrainHooks {
  std::function<void(const StepLog&)> on_step;
  std::function<void(const TrainState&)> on_epoch_end;
};

inline TrainState init_train_state(const ModelConfig& model, const TrainConfig& cfg) {
  TrainState s;
  s.params = init_model_params<float>(model);
  s.adam = AdamState<float>::zeros_like(s.params);
  s.adam.alpha = cfg.schedule.base_lr;
  s.adam.beta1 = cfg.beta1;
  s.adam.beta2 = cfg.beta2;
  s.adam.eps = cfg.eps;
  return s;
}

/// Crop and K x (H*W) target for one person of an (augmented) image.
struct PersonTarget {
  Image crop;
  Tensor<float> target;
  std::vector<bool> mask;
  std::size_t visible = 0;
};

inline std::optional<PersonTarget> make_person_target(const ModelConfig& cfg, const HeatmapGeometry& g,
                                                      const Image& image, const PoseInstance& p, double sigma) {
  if (p.visible_count() == 0 || !(p.bbox.w > 1) || !(p.bbox.h > 1)) return std::nullopt;
  Crop crop = crop_to_input(image, p.bbox, cfg.td_height, cfg.td_width);
  GroundTruthSpec spec;
  spec.sigma = sigma;
  spec.geometry = g;
  PersonTarget t;
  for (const auto& kp : p.keypoints) {
    spec.keypoints.push_back(crop.transform.apply({kp.x, kp.y}));
    spec.visibility.push_back(kp.v);
    t.mask.push_back(kp.v > 0);
    t.visible += kp.v > 0;
  }
  t.target = render_gaussian<float>(spec).channel_major();
  t.crop = std::move(crop.image);
  return t;
}

namespace detail {

struct BatchItem {
  std::size_t image = 0, person = 0;
};

inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(derive_seed(seed, epoch, 0x5u));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

}  // namespace detail

/// Persons of each epoch are batched in shuffled image order; persons of
/// one image inside a batch share a tape and a single BU pass. The batch
/// loss is the squared error over all visible channels divided by the
/// number of visible cells in the batch.
inline void train(const DpitModel<float>& model, const std::vector<Sample>& data, const Skeleton& skel,
                  const TrainConfig& cfg, TrainState& state, const TrainHooks& hooks = {}) {
  cfg.validate();
  const ModelConfig& mc = model.config();
  if (mc.keypoints != skel.size()) {
    throw ConfigError("model predicts " + std::to_string(mc.keypoints) + " keypoints but skeleton '" + skel.name +
                      "' has " + std::to_string(skel.size()));
  }
  if (data.empty() && cfg.schedule.epochs > 0) throw ConfigError("training set is empty");
  const HeatmapGeometry& g = model.heatmap_geometry();
  const std::size_t cells = g.height * g.width;

  for (; state.epoch < cfg.schedule.epochs; ++state.epoch, state.batch_in_epoch = 0) {
    const double lr = lr_at(state.epoch, cfg.schedule);
    std::vector<detail::BatchItem> items;
    for (std::size_t img : detail::epoch_order(data.size(), cfg.seed, state.epoch)) {
      for (std::size_t p = 0; p < data[img].persons.size(); ++p) {
        if (data[img].persons[p].visible_count() > 0) items.push_back({img, p});
      }
    }
    const std::size_t batches = (items.size() + cfg.batch_size - 1) / cfg.batch_size;
    for (std::size_t b = state.batch_in_epoch; b < batches; ++b) {
      if (cfg.max_steps > 0 && state.step >= cfg.max_steps) {
        state.batch_in_epoch = b;
        return;
      }
      struct Group {
        Image bu;
        std::vector<PersonTarget> persons;
      };
      std::vector<Group> groups;
      std::size_t visible = 0;
      const std::size_t end = std::min(items.size(), (b + 1) * cfg.batch_size);
      for (std::size_t i = b * cfg.batch_size; i < end;) {
        const std::size_t img = items[i].image;
        std::mt19937_64 rng(derive_seed(cfg.seed, img, state.epoch));
        const Sample aug = apply_augment(data[img], draw_augment(cfg.augment, rng), skel);
        Group grp{resize_full(aug.image, mc.bu_height, mc.bu_width).image, {}};
        for (; i < end && items[i].image == img; ++i) {
          auto t = make_person_target(mc, g, aug.image, aug.persons[items[i].person], cfg.sigma);
          if (!t) continue;
          visible += t->visible;
          grp.persons.push_back(std::move(*t));
        }
        if (!grp.persons.empty()) groups.push_back(std::move(grp));
      }

      std::vector<Tensor<float>> grads;
      for (const auto& [_, t] : state.params) grads.emplace_back(t.shape());
      double loss = 0;
      if (visible > 0) {
        const float denom = static_cast<float>(visible * cells);
        std::optional<std::mt19937_64> drop_rng;
        if (mc.encoder.dropout > 0) drop_rng.emplace(derive_seed(cfg.seed, state.step, 0xd7u));
        ForwardOptions<float> opt;
        opt.dropout_rng = drop_rng ? &*drop_rng : nullptr;
        for (const auto& grp : groups) {
          Tape<float> tape;
          BoundParams<float> bound(tape, state.params, true);
          std::vector<Var<float>> crops;
          for (const auto& p : grp.persons) crops.push_back(tape.constant(p.crop));
          auto rows = model.forward_group(bound, tape.constant(grp.bu), crops, opt);
          Var<float> total = ops::masked_mse(rows[0], grp.persons[0].target, grp.persons[0].mask, denom);
          for (std::size_t k = 1; k < rows.size(); ++k) {
            total = ops::add(total, ops::masked_mse(rows[k], grp.persons[k].target, grp.persons[k].mask, denom));
          }
          tape.backward(total);
          loss += total.value()[0];
          const auto& vars = bound.vars();
          for (std::size_t k = 0; k < vars.size(); ++k) {
            if (!vars[k].tape().has_grad(vars[k].id())) continue;
            const Tensor<float> gk = vars[k].grad();
            float* dst = grads[k].ptr();
            for (std::size_t e = 0; e < gk.size(); ++e) dst[e] += gk[e];
          }
        }
      }
      const StepLog log{state.step, state.epoch, lr, loss};
      if (!std::isfinite(loss)) throw TrainingAborted("non-finite loss at step " + std::to_string(state.step), log);
      if (cfg.weight_decay > 0) {
        for (std::size_t k = 0; k < grads.size(); ++k) {
          const float* p = state.params.tensor(k).ptr();
          float* gk = grads[k].ptr();
          for (std::size_t e = 0; e < grads[k].size(); ++e) gk[e] += static_cast<float>(cfg.weight_decay) * p[e];
        }
      }
      if (cfg.grad_clip > 0) {
        double sq = 0;
        for (const auto& gk : grads) {
          for (float v : gk.data()) sq += double(v) * v;
        }
        const double norm = std::sqrt(sq);
        if (norm > cfg.grad_clip) {
          const float s = static_cast<float>(cfg.grad_clip / norm);
          for (auto& gk : grads) {
            for (auto& v : gk.data()) v *= s;
          }
        }
      }
      try {
        adam_step(state.params, grads, state.adam, lr);
      } catch (const NumericError& e) {
        throw TrainingAborted(e.what(), log);
      }
      state.curve.push_back(log);
      ++state.step;
      state.batch_in_epoch = b + 1;
      if (hooks.on_step) hooks.on_step(log);
    }
    if (hooks.on_epoch_end) {
      TrainState snapshot_view = state;
      snapshot_view.epoch = state.epoch + 1;
      snapshot_view.batch_in_epoch = 0;
      hooks.on_epoch_end(snapshot_view);
    }
  }
}

}  // namespace dpit
