// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "hflab/nn/tensor.hpp"

// Differentiable operations. Every op records its backward pass when
// gradient tracking is on; all throw ShapeMismatch on incompatible shapes.
namespace hflab::nn {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);

/// x + y where y's shape is a trailing suffix of x's shape (bias, positional tables).
Tensor add_broadcast(const Tensor& x, const Tensor& y);

/// [..., k] x [k, m] -> [..., m]; rows are independent.
Tensor matmul(const Tensor& x, const Tensor& w);

/// y = x W + b, applied per row. `b` may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);

/// x if x >= 0 else a x, with `slope` a single learnable element.
Tensor prelu(const Tensor& x, const Tensor& slope);

enum class SpikeGradient {
  /// Backward through sigmoid((x - threshold) / T) * x.
  surrogate,
  /// True derivative of the forward gate (zero w.r.t. the threshold).
  exact,
};

/// Forward: x where x >= threshold, else 0. `threshold` is a single element.
Tensor spiking(const Tensor& x, const Tensor& threshold, double temperature,
               SpikeGradient mode = SpikeGradient::surrogate);

/// Row-wise softmax over the last axis with max subtraction.
Tensor softmax(const Tensor& x);

/// Per-row (x - mean) / sigma over the last axis (population sigma), then
/// gain * . + bias. Rows with sigma < 1e-12 normalize to zeros.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias);

/// LayerNorm(x + sublayer_out).
Tensor add_norm(const Tensor& x, const Tensor& sublayer_out, const Tensor& gain, const Tensor& bias);

Tensor reshape(const Tensor& x, Shape shape);
Tensor concat_last(const std::vector<Tensor>& parts);
Tensor slice_last(const Tensor& x, std::size_t start, std::size_t length);

/// [B, L, d] -> [B, d] at time step t.
Tensor select_step(const Tensor& x, std::size_t t);
/// n tensors of [B, d] -> [B, n, d].
Tensor stack_steps(const std::vector<Tensor>& steps);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// keep(n, m) == 1 lets query n attend to key m.
class AttentionMask {
 public:
  AttentionMask(std::size_t rows, std::size_t cols, std::vector<unsigned char> keep);
  static AttentionMask causal(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool keep(std::size_t n, std::size_t m) const noexcept { return keep_[n * cols_ + m] != 0; }

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<unsigned char> keep_;
};

/// softmax(Q K^T / sqrt(d_q) with masked scores set to -inf) V, per head.
///
/// Accepts [N, h*d_q] / [M, h*d_q] / [M, h*d_v] or a leading batch axis. Head
/// i reads columns [i*d, (i+1)*d) and outputs are concatenated per head.
/// Fully masked query rows produce zeros. Each query row is computed by the
/// same instruction sequence, so permuting query rows permutes outputs exactly.
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads = 1,
                            const AttentionMask* mask = nullptr);

/// PE[n, 2i] = sin(n / 10000^(2i/d)), PE[n, 2i+1] = cos(n / 10000^(2i/d)).
/// Throws OddDimension.
Tensor sinusoidal_pe(std::size_t length, std::size_t dim);

}  // namespace hflab::nn
