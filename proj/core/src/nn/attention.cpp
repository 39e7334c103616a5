// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include <Eigen/Dense>

#include "hflab/error.hpp"
#include "hflab/nn/ops.hpp"

namespace hflab::nn {

AttentionMask::AttentionMask(std::size_t rows, std::size_t cols, std::vector<unsigned char> keep)
    : rows_(rows), cols_(cols), keep_(std::move(keep)) {
  if (keep_.size() != rows * cols) raise(ErrorCode::ShapeMismatch, "attention mask size does not match its shape");
}

AttentionMask AttentionMask::causal(std::size_t n) {
  std::vector<unsigned char> keep(n * n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) keep[i * n + j] = 1;
  }
  return AttentionMask(n, n, std::move(keep));
}

namespace {

struct Dims {
  std::size_t batch, n, m, heads, dq, dv;
};

Dims check_dims(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads, const AttentionMask* mask) {
  const std::size_t rank = q.rank();
  if ((rank != 2 && rank != 3) || k.rank() != rank || v.rank() != rank) {
    raise(ErrorCode::ShapeMismatch, "attention expects 2-D or batched 3-D q/k/v");
  }
  if (heads == 0) raise(ErrorCode::ShapeMismatch, "attention with zero heads");
  Dims d{};
  d.batch = rank == 3 ? q.dim(0) : 1;
  const std::size_t off = rank == 3 ? 1 : 0;
  if (rank == 3 && (k.dim(0) != d.batch || v.dim(0) != d.batch)) {
    raise(ErrorCode::ShapeMismatch, "attention batch sizes differ");
  }
  d.n = q.dim(off);
  d.m = k.dim(off);
  if (v.dim(off) != d.m) raise(ErrorCode::ShapeMismatch, "keys and values differ in length");
  const std::size_t wq = q.dim(off + 1);
  const std::size_t wv = v.dim(off + 1);
  if (k.dim(off + 1) != wq) {
    raise(ErrorCode::ShapeMismatch,
          "query width " + std::to_string(wq) + " vs key width " + std::to_string(k.dim(off + 1)));
  }
  if (wq % heads != 0 || wv % heads != 0) {
    raise(ErrorCode::ShapeMismatch, "attention widths not divisible by " + std::to_string(heads) + " heads");
  }
  d.heads = heads;
  d.dq = wq / heads;
  d.dv = wv / heads;
  if (mask && (mask->rows() != d.n || mask->cols() != d.m)) {
    raise(ErrorCode::ShapeMismatch, "attention mask shape does not match scores");
  }
  return d;
}

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Block = Eigen::Map<RowMat<double>, 0, Eigen::OuterStride<>>;
using ConstBlock = Eigen::Map<const RowMat<double>, 0, Eigen::OuterStride<>>;

// One head's columns of a [rows x width] row-major matrix.
ConstBlock head_block(const double* base, std::size_t rows, std::size_t width, std::size_t offset, std::size_t cols) {
  return ConstBlock(base + offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols),
                    Eigen::OuterStride<>(static_cast<Eigen::Index>(width)));
}

Block head_block(double* base, std::size_t rows, std::size_t width, std::size_t offset, std::size_t cols) {
  return Block(base + offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols),
               Eigen::OuterStride<>(static_cast<Eigen::Index>(width)));
}

}  // namespace

// The forward pass keeps scores transposed (keys x queries) so that every
// loop vectorizes across queries while each query's sums still run over keys
// and head dimensions in a fixed order. A query row's output therefore does
// not depend on its position or on the other rows.
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                            const AttentionMask* mask) {
  const Dims d = check_dims(q, k, v, heads, mask);
  const std::size_t wq = d.heads * d.dq;
  const std::size_t wv = d.heads * d.dv;
  const std::size_t n = d.n;
  const std::size_t m = d.m;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d.dq));
  const auto qv = q.values();
  const auto kv = k.values();
  const auto vv = v.values();

  // probs[b][h] is P^T (m x n), kept for the backward pass.
  auto probs = std::make_shared<std::vector<double>>(d.batch * d.heads * m * n);
  std::vector<double> out(d.batch * n * wv, 0.0);
  std::vector<double> qt(d.dq * n);
  std::vector<double> ot(d.dv * n);
  std::vector<double> mx(n);
  std::vector<double> total(n);
  constexpr Eigen::Index kPacket = 8;
  Eigen::ArrayXd scratch = Eigen::ArrayXd::Zero(static_cast<Eigen::Index>((n + kPacket - 1) / kPacket * kPacket));
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();

  for (std::size_t b = 0; b < d.batch; ++b) {
    const double* qb = qv.data() + b * n * wq;
    const double* kb = kv.data() + b * m * wq;
    const double* vb = vv.data() + b * m * wv;
    double* ob = out.data() + b * n * wv;
    for (std::size_t h = 0; h < d.heads; ++h) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < d.dq; ++c) qt[c * n + i] = qb[i * wq + h * d.dq + c];
      }
      double* pt = probs->data() + (b * d.heads + h) * m * n;
      std::fill(mx.begin(), mx.end(), kNegInf);
      for (std::size_t j = 0; j < m; ++j) {
        double* sj = pt + j * n;
        std::fill(sj, sj + n, 0.0);
        const double* kj = kb + j * wq + h * d.dq;
        for (std::size_t c = 0; c < d.dq; ++c) {
          const double kc = kj[c];
          const double* qc = qt.data() + c * n;
          for (std::size_t i = 0; i < n; ++i) sj[i] += kc * qc[i];
        }
        for (std::size_t i = 0; i < n; ++i) sj[i] *= scale;
        if (mask) {
          for (std::size_t i = 0; i < n; ++i) {
            if (!mask->keep(i, j)) sj[i] = kNegInf;
          }
        }
        for (std::size_t i = 0; i < n; ++i) mx[i] = std::max(mx[i], sj[i]);
      }
      // A fully masked query row attends to nothing and outputs zeros.
      for (std::size_t i = 0; i < n; ++i) {
        if (mx[i] == kNegInf) mx[i] = std::numeric_limits<double>::infinity();
      }
      std::fill(total.begin(), total.end(), 0.0);
      for (std::size_t j = 0; j < m; ++j) {
        double* sj = pt + j * n;
        // Padded to whole packets so every query goes through the same
        // vectorized exp, wherever it sits in the row.
        std::copy(sj, sj + n, scratch.data());
        for (std::size_t i = 0; i < n; ++i) scratch[i] -= mx[i];
        scratch = scratch.exp();
        for (std::size_t i = 0; i < n; ++i) {
          sj[i] = sj[i] == kNegInf ? 0.0 : scratch[i];
          total[i] += sj[i];
        }
      }
      for (std::size_t i = 0; i < n; ++i) total[i] = total[i] > 0.0 ? 1.0 / total[i] : 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        double* sj = pt + j * n;
        for (std::size_t i = 0; i < n; ++i) sj[i] *= total[i];
      }
      std::fill(ot.begin(), ot.end(), 0.0);
      for (std::size_t j = 0; j < m; ++j) {
        const double* pj = pt + j * n;
        const double* vj = vb + j * wv + h * d.dv;
        for (std::size_t c = 0; c < d.dv; ++c) {
          const double vc = vj[c];
          double* oc = ot.data() + c * n;
          for (std::size_t i = 0; i < n; ++i) oc[i] += vc * pj[i];
        }
      }
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < d.dv; ++c) ob[i * wv + h * d.dv + c] = ot[c * n + i];
      }
    }
  }

  Shape shape = q.shape();
  shape.back() = wv;
  return Tensor::make_result(std::move(shape), std::move(out), {&q, &k, &v}, [d, probs, scale](detail::Node& self) {
    const std::size_t wq = d.heads * d.dq;
    const std::size_t wv = d.heads * d.dv;
    const auto n = static_cast<Eigen::Index>(d.n);
    const auto m = static_cast<Eigen::Index>(d.m);
    const auto& qv = self.inputs[0]->value;
    const auto& kv = self.inputs[1]->value;
    const auto& vv = self.inputs[2]->value;
    double* gq = self.inputs[0]->requires_grad ? self.inputs[0]->ensure_grad().data() : nullptr;
    double* gk = self.inputs[1]->requires_grad ? self.inputs[1]->ensure_grad().data() : nullptr;
    double* gv = self.inputs[2]->requires_grad ? self.inputs[2]->ensure_grad().data() : nullptr;
    const auto& g = self.grad;
    RowMat<double> dpt(m, n);
    Eigen::RowVectorXd rowdot(n);
    for (std::size_t b = 0; b < d.batch; ++b) {
      for (std::size_t h = 0; h < d.heads; ++h) {
        const Eigen::Map<const RowMat<double>> pt(probs->data() + (b * d.heads + h) * d.m * d.n, m, n);
        const auto go = head_block(g.data() + b * d.n * wv, d.n, wv, h * d.dv, d.dv);
        const auto vh = head_block(vv.data() + b * d.m * wv, d.m, wv, h * d.dv, d.dv);
        if (gv) head_block(gv + b * d.m * wv, d.m, wv, h * d.dv, d.dv).noalias() += pt * go;
        if (!gq && !gk) continue;
        // dP^T = V dO^T; dS = P (dP - rowsum(P o dP)) / sqrt(d)
        dpt.noalias() = vh * go.transpose();
        rowdot = pt.cwiseProduct(dpt).colwise().sum();
        dpt = (pt.array() * (dpt.array().rowwise() - rowdot.array()) * scale).matrix();
        if (gq) {
          const auto kh = head_block(kv.data() + b * d.m * wq, d.m, wq, h * d.dq, d.dq);
          head_block(gq + b * d.n * wq, d.n, wq, h * d.dq, d.dq).noalias() += dpt.transpose() * kh;
        }
        if (gk) {
          const auto qh = head_block(qv.data() + b * d.n * wq, d.n, wq, h * d.dq, d.dq);
          head_block(gk + b * d.m * wq, d.m, wq, h * d.dq, d.dq).noalias() += dpt * qh;
        }
      }
    }
  });
}

}  // namespace hflab::nn
