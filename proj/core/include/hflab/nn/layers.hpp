// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "hflab/nn/ops.hpp"

namespace hflab::nn {

using Rng = std::mt19937_64;

struct Parameter {
  std::string name;
  Tensor tensor;
};

/// Ordered, uniquely named set of trainable tensors.
class ParameterList {
 public:
  /// Registers `tensor` (marked requires_grad) under `name`; duplicate names throw.
  Tensor add(std::string name, Tensor tensor);

  const std::vector<Parameter>& items() const noexcept { return items_; }
  std::vector<Parameter>& items() noexcept { return items_; }
  std::size_t size() const noexcept { return items_.size(); }
  /// Total scalar count.
  std::size_t numel() const;

  const Parameter* find(const std::string& name) const;
  Tensor at(const std::string& name) const;
  void zero_grad();

 private:
  std::vector<Parameter> items_;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) tensor.
Tensor uniform_init(Shape shape, std::size_t fan_in, Rng& rng);

class Linear {
 public:
  Linear() = default;
  Linear(ParameterList& params, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng,
         bool bias = true);

  Tensor operator()(const Tensor& x) const { return linear(x, w_, b_); }

  std::size_t in_features() const { return w_.dim(0); }
  std::size_t out_features() const { return w_.dim(1); }
  const Tensor& weight() const noexcept { return w_; }
  const Tensor& bias() const noexcept { return b_; }

 private:
  Tensor w_;
  Tensor b_;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterList& params, const std::string& prefix, std::size_t dim);

  Tensor operator()(const Tensor& x) const { return layer_norm(x, gain_, bias_); }
  /// LayerNorm(x + sub).
  Tensor add_norm(const Tensor& x, const Tensor& sub) const { return nn::add_norm(x, sub, gain_, bias_); }

 private:
  Tensor gain_;
  Tensor bias_;
};

class PRelu {
 public:
  PRelu() = default;
  PRelu(ParameterList& params, const std::string& prefix, double init_slope = 0.25);

  Tensor operator()(const Tensor& x) const { return prelu(x, slope_); }
  const Tensor& slope() const noexcept { return slope_; }

 private:
  Tensor slope_;
};

class Spiking {
 public:
  Spiking() = default;
  Spiking(ParameterList& params, const std::string& prefix, double temperature = 0.1, double init_threshold = 0.0);

  Tensor operator()(const Tensor& x) const { return spiking(x, threshold_, temperature_, mode_); }
  const Tensor& threshold() const noexcept { return threshold_; }
  void set_mode(SpikeGradient mode) noexcept { mode_ = mode; }

 private:
  Tensor threshold_;
  double temperature_ = 0.1;
  SpikeGradient mode_ = SpikeGradient::surrogate;
};

/// Multi-head attention with per-head projections of width `head_dim`.
/// Q, K, V project d_model -> heads * head_dim; the output projects back.
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterList& params, const std::string& prefix, std::size_t d_model, std::size_t heads,
                     std::size_t head_dim, Rng& rng);

  /// Self-attention when `memory` is undefined, otherwise cross-attention with
  /// keys and values projected from `memory`. Accepts [L, d] or [B, L, d].
  Tensor operator()(const Tensor& x, const Tensor& memory = Tensor(), const AttentionMask* mask = nullptr) const;

  std::size_t heads() const noexcept { return heads_; }

 private:
  std::size_t heads_ = 1;
  Linear q_, k_, v_, o_;
};

}  // namespace hflab::nn
