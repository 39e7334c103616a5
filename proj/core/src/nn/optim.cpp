// SPDX-License-Identifier: Apache-2.0
#include "hflab/nn/optim.hpp"

#include <cmath>

#include "hflab/error.hpp"

namespace hflab::nn {

AdamW::AdamW(ParameterList& params, AdamWConfig config) : params_(&params), config_(config) {
  for (const auto& p : params.items()) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void AdamW::step() {
  auto& items = params_->items();
  for (const auto& p : items) {
    for (double g : p.tensor.grad()) {
      if (!std::isfinite(g)) raise(ErrorCode::NonFiniteGradient, "non-finite gradient in " + p.name);
    }
  }
  ++t_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const double lr = config_.lr;
  const double decay = lr * config_.weight_decay;
  for (std::size_t k = 0; k < items.size(); ++k) {
    Tensor& w = items[k].tensor;
    auto values = w.mutable_values();
    const auto grad = w.grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad.empty() ? 0.0 : grad[i];
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      values[i] -= decay * values[i] + lr * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
  }
}

}  // namespace hflab::nn
