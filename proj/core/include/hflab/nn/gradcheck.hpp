// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "hflab/nn/tensor.hpp"

namespace hflab::nn {

struct GradCheckResult {
  double max_rel_error = 0.0;
  /// Location of the worst coordinate.
  std::size_t tensor_index = 0;
  std::size_t element = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

/// Compares reverse-mode gradients of the scalar `f` with respect to `inputs`
/// against central differences (f(x+h) - f(x-h)) / 2h, coordinate by
/// coordinate, in 64-bit matmul precision. Relative error is
/// |a - n| / max(1e-6, |a|, |n|).
GradCheckResult grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& inputs, double h = 1e-5);

}  // namespace hflab::nn
