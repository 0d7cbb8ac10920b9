#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "ikm/tensor.hpp"

namespace ikm {

// max_i |numeric_i - analytic_i| / max(max_i |analytic_i|, max_i |numeric_i|)
// with central differences of f along every coordinate of x.
inline double finite_diff_check(
    const std::function<double(const Tensor<double>&)>& f, Tensor<double> x,
    const Tensor<double>& analytic_grad, double step = 1e-5) {
  require_same_shape(x, analytic_grad, "finite_diff_check");
  double worst = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + step;
    const double up = f(x);
    x[i] = orig - step;
    const double down = f(x);
    x[i] = orig;
    const double numeric = (up - down) / (2.0 * step);
    const double analytic = analytic_grad[i];
    if (!std::isfinite(up) || !std::isfinite(down) || !std::isfinite(analytic))
      throw NumericError("finite_diff_check: non-finite value at entry " +
                         std::to_string(i));
    worst = std::max(worst, std::abs(numeric - analytic));
    scale = std::max({scale, std::abs(numeric), std::abs(analytic)});
  }
  return scale > 0 ? worst / scale : 0.0;
}

// Layers covered by gradcheck_trial.
inline constexpr const char* kGradcheckLayers[] = {"ikm", "conv", "ca",
                                                   "sa",  "dense", "uhdb"};

// One randomized trial for the named layer in 64-bit: the loss is <r, f(x)>
// for a random r, checked against backward() for the input and every
// parameter. Returns the worst relative error.
double gradcheck_trial(const std::string& layer, std::uint64_t seed,
                       double step = 1e-5);

}  // namespace ikm
