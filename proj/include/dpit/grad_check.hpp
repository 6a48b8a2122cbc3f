#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "dpit/autograd.hpp"

namespace dpit {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-3;
  std::size_t samples = 200;
  std::uint64_t seed = 0;
  /// Denominator floor for the relative error, so coordinates whose true
  /// gradient is ~0 are judged on absolute error instead.
  double floor = 1e-8;
};

struct GradCheckEntry {
  std::string tensor;
  std::size_t index = 0;
  double analytic = 0;
  double numeric = 0;
  double rel_error = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0;
  bool passed = false;
  bool aborted = false;
  std::string diagnostic;
};

/// Scalar computation over a list of parameter leaves.
template <typename T>
using LossFn = std::function<Var<T>(Tape<T>&, const std::vector<Var<T>>&)>;

inline double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

/// Compares tape gradients with central differences (f(p+h) - f(p-h)) / 2h at
/// sampled coordinates. Samples are dealt round-robin over the tensors so
/// every tensor is probed before any is probed twice.
template <typename T>
GradCheckReport grad_check(const LossFn<T>& f, std::vector<Tensor<T>> params,
                           const std::vector<std::string>& names, const GradCheckOptions& opt) {
  GradCheckReport report;
  if (names.size() != params.size()) throw Error("grad_check: one name per parameter tensor required");
  if (!(opt.step > 0)) throw ConfigError("grad_check: step must be positive");
  if (opt.samples == 0 || params.empty()) {
    report.passed = true;
    report.diagnostic = "warning: no coordinates sampled; check is vacuous";
    return report;
  }

  auto evaluate = [&](bool with_grad, std::vector<Tensor<T>>* grads) -> double {
    Tape<T> tape;
    tape.set_recording(with_grad);
    std::vector<Var<T>> leaves;
    leaves.reserve(params.size());
    for (const auto& p : params) leaves.push_back(tape.leaf(p, true));
    Var<T> loss = f(tape, leaves);
    const double value = static_cast<double>(loss.value()[0]);
    if (with_grad && std::isfinite(value)) {
      tape.backward(loss);
      for (const auto& l : leaves) grads->push_back(l.grad());
    }
    return value;
  };

  std::vector<Tensor<T>> grads;
  const double base = evaluate(true, &grads);
  if (!std::isfinite(base)) {
    report.aborted = true;
    report.diagnostic = "loss is not finite at the evaluation point";
    return report;
  }

  std::mt19937_64 rng(opt.seed);
  for (std::size_t s = 0; s < opt.samples; ++s) {
    const std::size_t ti = s % params.size();
    std::uniform_int_distribution<std::size_t> pick(0, params[ti].size() - 1);
    const std::size_t idx = pick(rng);
    const T original = params[ti][idx];
    params[ti][idx] = original + static_cast<T>(opt.step);
    const double up = evaluate(false, nullptr);
    params[ti][idx] = original - static_cast<T>(opt.step);
    const double down = evaluate(false, nullptr);
    params[ti][idx] = original;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      report.aborted = true;
      report.diagnostic = "loss became non-finite while perturbing " + names[ti] + "[" + std::to_string(idx) + "]";
      report.passed = false;
      return report;
    }
    GradCheckEntry e;
    e.tensor = names[ti];
    e.index = idx;
    e.analytic = static_cast<double>(grads[ti][idx]);
    e.numeric = (up - down) / (2.0 * opt.step);
    e.rel_error = relative_error(e.analytic, e.numeric, opt.floor);
    report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
    report.entries.push_back(std::move(e));
  }
  report.passed = report.max_rel_error < opt.tolerance;
  return report;
}

}  // namespace dpit
