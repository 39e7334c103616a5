// SPDX-License-Identifier: Apache-2.0
#include "hflab/nn/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hflab/error.hpp"

namespace hflab::nn {
namespace {

void check_pair(const Tensor& pred, const Tensor& target, const char* name) {
  if (pred.numel() == 0 || pred.numel() != target.numel()) {
    raise(ErrorCode::ShapeMismatch, std::string(name) + ": prediction " + shape_string(pred.shape()) +
                                        " vs target " + shape_string(target.shape()));
  }
}

}  // namespace

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  check_pair(pred, target, "mse");
  const auto p = pred.values();
  const auto y = target.values();
  const double inv_n = 1.0 / static_cast<double>(p.size());
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) total += (p[i] - y[i]) * (p[i] - y[i]);
  return Tensor::make_result(Shape{1}, {total * inv_n}, {&pred, &target}, [inv_n](detail::Node& self) {
    const double g = self.grad[0];
    const auto& p = self.inputs[0]->value;
    const auto& y = self.inputs[1]->value;
    for (std::size_t k = 0; k < 2; ++k) {
      if (!self.inputs[k]->requires_grad) continue;
      auto& gi = self.inputs[k]->ensure_grad();
      const double sign = k == 0 ? 1.0 : -1.0;
      for (std::size_t i = 0; i < p.size(); ++i) gi[i] += sign * g * 2.0 * (p[i] - y[i]) * inv_n;
    }
  });
}

Tensor mae_loss(const Tensor& pred, const Tensor& target) {
  check_pair(pred, target, "mae");
  const auto p = pred.values();
  const auto y = target.values();
  const double inv_n = 1.0 / static_cast<double>(p.size());
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) total += std::abs(p[i] - y[i]);
  return Tensor::make_result(Shape{1}, {total * inv_n}, {&pred, &target}, [inv_n](detail::Node& self) {
    const double g = self.grad[0];
    const auto& p = self.inputs[0]->value;
    const auto& y = self.inputs[1]->value;
    for (std::size_t k = 0; k < 2; ++k) {
      if (!self.inputs[k]->requires_grad) continue;
      auto& gi = self.inputs[k]->ensure_grad();
      const double sign = k == 0 ? 1.0 : -1.0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double r = p[i] - y[i];
        const double s = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
        gi[i] += sign * g * s * inv_n;
      }
    }
  });
}

Tensor quantile_loss(const Tensor& pred, const Tensor& target, const std::vector<double>& quantiles) {
  if (quantiles.empty()) raise(ErrorCode::QuantileOutOfRange, "no quantiles given");
  for (double q : quantiles) {
    if (!(q > 0.0 && q < 1.0)) raise(ErrorCode::QuantileOutOfRange, "quantile " + std::to_string(q));
  }
  const std::size_t nq = quantiles.size();
  if (pred.rank() != 2 || pred.dim(1) != nq || pred.dim(0) == 0 || target.numel() != pred.dim(0)) {
    raise(ErrorCode::ShapeMismatch, "quantile loss: prediction " + shape_string(pred.shape()) + " vs target " +
                                        shape_string(target.shape()) + " with " + std::to_string(nq) +
                                        " quantiles");
  }
  const std::size_t n = pred.dim(0);
  const auto p = pred.values();
  const auto y = target.values();
  const double inv = 1.0 / static_cast<double>(n * nq);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < nq; ++j) {
      // Residual taken as target minus prediction so the minimizer is the
      // q-quantile of the targets.
      const double r = y[i] - p[i * nq + j];
      const double q = quantiles[j];
      total += std::max(q * r, (q - 1.0) * r);
    }
  }
  return Tensor::make_result(Shape{1}, {total * inv}, {&pred, &target}, [quantiles, n, nq, inv](detail::Node& self) {
    const double g = self.grad[0];
    const auto& p = self.inputs[0]->value;
    const auto& y = self.inputs[1]->value;
    double* gp = self.inputs[0]->requires_grad ? self.inputs[0]->ensure_grad().data() : nullptr;
    double* gy = self.inputs[1]->requires_grad ? self.inputs[1]->ensure_grad().data() : nullptr;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < nq; ++j) {
        const double r = y[i] - p[i * nq + j];
        const double q = quantiles[j];
        // d/dr max(q r, (q-1) r); at r == 0 take the subgradient 0.
        const double d = r > 0.0 ? q : (r < 0.0 ? q - 1.0 : 0.0);
        if (gp) gp[i * nq + j] -= g * d * inv;
        if (gy) gy[i] += g * d * inv;
      }
    }
  });
}

}  // namespace hflab::nn
