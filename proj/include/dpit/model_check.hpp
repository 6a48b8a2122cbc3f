#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dpit/grad_check.hpp"
#include "dpit/scene.hpp"
#include "dpit/train.hpp"

namespace dpit {

/// Finite-difference check of the whole training loss (both backbones,
/// tokenizer, encoder, head) in double precision on a small synthetic batch.
/// Sampled coordinates are spread round-robin over every parameter tensor.
inline GradCheckReport model_grad_check(const ModelConfig& cfg, const Skeleton& skel, std::size_t samples,
                                        std::uint64_t seed, std::size_t images = 2) {
  cfg.validate();
  if (cfg.keypoints != skel.size()) throw ConfigError("grad-check: model keypoints differ from the skeleton");
  SceneSpec spec;
  spec.width = cfg.bu_width;
  spec.height = cfg.bu_height;
  spec.max_persons = 2;
  spec.overlap_prob = 0.5;
  spec.seed = derive_seed(seed, 0x6c);
  const auto set = generate_dataset(spec, images, skel);
  DpitModel<double> model(cfg);
  const HeatmapGeometry& g = model.heatmap_geometry();

  struct Person {
    Tensor<double> crop, target;
    std::vector<bool> mask;
  };
  struct Group {
    Tensor<double> bu;
    std::vector<Person> persons;
  };
  std::vector<Group> groups;
  std::size_t visible = 0;
  for (std::size_t i = 0; i < images; ++i) {
    Group grp{resize_full(set.images[i], cfg.bu_height, cfg.bu_width).image.cast<double>(), {}};
    for (const auto& p : set.dataset.annotations) {
      if (p.image_id != static_cast<std::int64_t>(i) + 1) continue;
      auto t = make_person_target(cfg, g, set.images[i], p, 2.0);
      if (!t) continue;
      visible += t->visible;
      grp.persons.push_back({t->crop.cast<double>(), t->target.cast<double>(), t->mask});
    }
    if (!grp.persons.empty()) groups.push_back(std::move(grp));
  }
  if (visible == 0) throw NumericError("grad-check: synthetic batch has no visible keypoints");
  const double denom = static_cast<double>(visible * g.height * g.width);

  const ParameterSet<double> params = init_model_params<double>(cfg);
  std::vector<std::string> names;
  std::vector<Tensor<double>> values;
  for (const auto& [n, t] : params) {
    names.push_back(n);
    values.push_back(t);
  }
  LossFn<double> loss = [&](Tape<double>& tape, const std::vector<Var<double>>& leaves) {
    BoundParams<double> bound(names, leaves);
    std::optional<Var<double>> total;
    for (const auto& grp : groups) {
      std::vector<Var<double>> crops;
      for (const auto& p : grp.persons) crops.push_back(tape.constant(p.crop));
      auto rows = model.forward_group(bound, tape.constant(grp.bu), crops);
      for (std::size_t k = 0; k < rows.size(); ++k) {
        auto l = ops::masked_mse(rows[k], grp.persons[k].target, grp.persons[k].mask, denom);
        total = total ? ops::add(*total, l) : l;
      }
    }
    return *total;
  };
  GradCheckOptions opt;
  opt.samples = samples;
  opt.seed = seed;
  return grad_check<double>(loss, values, names, opt);
}

}  // namespace dpit
