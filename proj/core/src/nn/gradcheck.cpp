// SPDX-License-Identifier: Apache-2.0
#include "hflab/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace hflab::nn {

GradCheckResult grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& inputs, double h) {
  MatmulPrecisionScope precision(MatmulPrecision::f64);
  std::vector<Tensor> xs = inputs;
  for (auto& x : xs) {
    x.set_requires_grad(true);
    x.zero_grad();
  }
  f().backward();
  std::vector<std::vector<double>> analytic;
  for (const auto& x : xs) {
    const auto g = x.grad();
    analytic.emplace_back(x.numel(), 0.0);
    std::copy(g.begin(), g.end(), analytic.back().begin());
  }

  GradCheckResult result;
  NoGradGuard no_grad;
  for (std::size_t t = 0; t < xs.size(); ++t) {
    auto values = xs[t].mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = f().item();
      values[i] = saved - h;
      const double down = f().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[t][i];
      const double denom = std::max({1e-6, std::abs(a), std::abs(numeric)});
      const double rel = std::abs(a - numeric) / denom;
      ++result.coordinates;
      if (rel > result.max_rel_error || result.coordinates == 1) {
        result.max_rel_error = rel;
        result.tensor_index = t;
        result.element = i;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace hflab::nn
