#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "b2s/nn/tensor.hpp"

namespace b2s::nn {

struct GradCheckOptions {
  double step = 1e-5;        // h = step * (1 + |x|)
  double abs_floor = 1e-8;   // differences at or below this count as exact
  std::size_t max_coords_per_input = 0;  // 0 checks every coordinate
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t input = 0;  // location of the worst coordinate
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

/// Compares the backward pass of scalar-valued `f` against central
/// differences for every (or an evenly strided subset of) coordinate of each
/// input. `f` must read the inputs' current values on every call.
inline GradCheckResult grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                                  const GradCheckOptions& opt = {}) {
  for (auto& t : inputs) t.zero_grad();
  {
    const Tensor y = f();
    require(std::isfinite(y.item()), ErrorKind::non_finite, "grad_check: non-finite function value");
    y.backward();
  }
  std::vector<std::vector<double>> analytic;
  for (const auto& t : inputs) {
    const auto g = t.grad();
    analytic.emplace_back(t.numel(), 0.0);
    if (!g.empty()) std::copy(g.begin(), g.end(), analytic.back().begin());
    for (double v : analytic.back())
      require(std::isfinite(v), ErrorKind::non_finite, "grad_check: non-finite analytic gradient");
  }
  NoGradGuard ng;
  GradCheckResult res;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto vals = inputs[k].values_mut();
    const auto n = vals.size();
    std::size_t stride = 1;
    if (opt.max_coords_per_input > 0 && n > opt.max_coords_per_input)
      stride = (n + opt.max_coords_per_input - 1) / opt.max_coords_per_input;
    for (std::size_t i = 0; i < n; i += stride) {
      const double x = vals[i];
      const double h = opt.step * (1.0 + std::abs(x));
      vals[i] = x + h;
      const double fp = f().item();
      vals[i] = x - h;
      const double fm = f().item();
      vals[i] = x;
      require(std::isfinite(fp) && std::isfinite(fm), ErrorKind::non_finite,
              "grad_check: non-finite value under perturbation");
      const double num = (fp - fm) / (2.0 * h);
      const double ana = analytic[k][i];
      const double diff = std::abs(ana - num);
      const double rel = diff <= opt.abs_floor ? 0.0 : diff / std::max(std::abs(ana), std::abs(num));
      ++res.checked;
      if (rel > res.max_rel_error || res.checked == 1) {
        res.max_rel_error = rel;
        res.input = k;
        res.index = i;
        res.analytic = ana;
        res.numeric = num;
      }
    }
  }
  for (auto& t : inputs) t.zero_grad();
  return res;
}

}  // namespace b2s::nn
