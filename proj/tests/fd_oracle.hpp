#pragma once

// Test-only central-difference oracle. Deliberately independent of
// dpit::grad_check so op gradients are checked by a separate route.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "dpit/autograd.hpp"

namespace dpit::testing {

using ScalarFn = std::function<double(const std::vector<Tensor<double>>&)>;

/// Numerical gradient of `f` with respect to input `which`, every coordinate.
inline Tensor<double> numeric_gradient(const ScalarFn& f, std::vector<Tensor<double>> inputs, std::size_t which,
                                       double h = 1e-6) {
  Tensor<double> g(inputs[which].shape());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double x0 = inputs[which][i];
    inputs[which][i] = x0 + h;
    const double up = f(inputs);
    inputs[which][i] = x0 - h;
    const double down = f(inputs);
    inputs[which][i] = x0;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

/// Largest |a - n| / max(|a|, |n|, floor) over all coordinates.
inline double max_relative_error(const Tensor<double>& analytic, const Tensor<double>& numeric, double floor = 1e-7) {
  double worst = 0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

}  // namespace dpit::testing
