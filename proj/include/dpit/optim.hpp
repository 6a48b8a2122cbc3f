#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dpit/params.hpp"

namespace dpit {

/// Moments shaped like the parameters they belong to.
template <typename T>
struct AdamState {
  ParameterSet<T> m, v;
  std::uint64_t t = 0;
  double alpha = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  static AdamState zeros_like(const ParameterSet<T>& params) {
    AdamState s;
    for (const auto& [name, value] : params) {
      s.m.add(name, Tensor<T>(value.shape()));
      s.v.add(name, Tensor<T>(value.shape()));
    }
    return s;
  }
};

/// Bias-corrected Adam update at learning rate `lr`. Gradients are checked
/// for finiteness before anything is modified.
template <typename T>
void adam_step(ParameterSet<T>& params, const std::vector<Tensor<T>>& grads, AdamState<T>& s, double lr) {
  if (grads.size() != params.size() || s.m.size() != params.size() || s.v.size() != params.size()) {
    throw DimensionError("adam_step: parameter, gradient and moment counts differ");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].shape() != params.tensor(i).shape()) {
      throw DimensionError("adam_step: gradient for " + params.name(i) + " has shape " + to_string(grads[i].shape()));
    }
    if (!grads[i].all_finite()) throw NumericError("adam_step: non-finite gradient in " + params.name(i));
  }
  s.t += 1;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
  for (std::size_t i = 0; i < grads.size(); ++i) {
    T* p = params.tensor(i).ptr();
    T* m = s.m.tensor(i).ptr();
    T* v = s.v.tensor(i).ptr();
    const T* g = grads[i].ptr();
    for (std::size_t j = 0; j < grads[i].size(); ++j) {
      m[j] = static_cast<T>(s.beta1 * m[j] + (1.0 - s.beta1) * g[j]);
      v[j] = static_cast<T>(s.beta2 * v[j] + (1.0 - s.beta2) * double(g[j]) * g[j]);
      const double mhat = m[j] / c1, vhat = v[j] / c2;
      p[j] = static_cast<T>(p[j] - lr * mhat / (std::sqrt(vhat) + s.eps));
    }
  }
}

/// Piecewise-constant schedule: base_lr divided by (1 / drop_factor) once
/// per drop epoch already reached.
struct LrSchedule {
  std::size_t epochs = 240;
  std::vector<std::size_t> drop_epochs{190, 220};
  double drop_factor = 0.1;
  double base_lr = 1e-3;

  void validate() const {
    for (std::size_t i = 0; i < drop_epochs.size(); ++i) {
      if (drop_epochs[i] >= epochs && epochs > 0) throw ConfigError("LR drop epochs must be below the epoch count");
      if (i > 0 && drop_epochs[i] <= drop_epochs[i - 1]) throw ConfigError("LR drop epochs must strictly increase");
    }
    if (!(drop_factor > 0) || !(base_lr > 0)) throw ConfigError("LR and drop factor must be positive");
  }

  /// Same schedule over a different epoch count, drops at the same fractions.
  LrSchedule scaled_to(std::size_t total) const {
    LrSchedule s = *this;
    s.epochs = total;
    s.drop_epochs.clear();
    for (auto d : drop_epochs) {
      const auto e = static_cast<std::size_t>(std::llround(static_cast<double>(d) * total / static_cast<double>(epochs)));
      if (e < total && (s.drop_epochs.empty() || e > s.drop_epochs.back())) s.drop_epochs.push_back(e);
    }
    return s;
  }
};

inline double lr_at(std::size_t epoch, const LrSchedule& s) {
  if (epoch >= s.epochs) {
    throw ConfigError("lr_at: epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(s.epochs) + ")");
  }
  int drops = 0;
  for (auto d : s.drop_epochs) drops += epoch >= d;
  return drops == 0 ? s.base_lr : s.base_lr / std::pow(1.0 / s.drop_factor, drops);
}

}  // namespace dpit
