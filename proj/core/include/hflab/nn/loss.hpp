// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "hflab/nn/tensor.hpp"

namespace hflab::nn {

enum class LossKind { mse, mae, quantile };

/// Mean squared error with mean reduction over all elements.
Tensor mse_loss(const Tensor& pred, const Tensor& target);
Tensor mae_loss(const Tensor& pred, const Tensor& target);

/// Pinball loss. `pred` is [N, Q] with one column per quantile, `target` is
/// [N] or [N, 1]. Mean over samples and quantiles.
/// Throws QuantileOutOfRange unless every q is in (0, 1).
Tensor quantile_loss(const Tensor& pred, const Tensor& target, const std::vector<double>& quantiles);

}  // namespace hflab::nn
