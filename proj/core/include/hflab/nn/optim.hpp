// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "hflab/nn/layers.hpp"

namespace hflab::nn {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// AdamW with bias-corrected moments and decoupled weight decay:
///   w <- w - lr * wd * w - lr * m_hat / (sqrt(v_hat) + eps)
class AdamW {
 public:
  AdamW(ParameterList& params, AdamWConfig config);

  /// Applies one update from the accumulated gradients. Throws
  /// NonFiniteGradient (naming the parameter) before touching any weight.
  void step();

  const AdamWConfig& config() const noexcept { return config_; }
  void set_lr(double lr) noexcept { config_.lr = lr; }
  std::uint64_t steps() const noexcept { return t_; }

  // State access for checkpointing.
  std::vector<std::vector<double>>& first_moments() noexcept { return m_; }
  std::vector<std::vector<double>>& second_moments() noexcept { return v_; }
  const std::vector<std::vector<double>>& first_moments() const noexcept { return m_; }
  const std::vector<std::vector<double>>& second_moments() const noexcept { return v_; }
  void set_steps(std::uint64_t t) noexcept { t_ = t; }

 private:
  ParameterList* params_;
  AdamWConfig config_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace hflab::nn
