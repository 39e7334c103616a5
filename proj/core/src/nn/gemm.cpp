// SPDX-License-Identifier: Apache-2.0
#include "gemm.hpp"

#include <Eigen/Dense>

#include "hflab/nn/tensor.hpp"

namespace hflab::nn::detail {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
void run(bool trans_a, bool trans_b, Eigen::Index m, Eigen::Index n, Eigen::Index k,
         const Eigen::Ref<const RowMat<T>>& a, const Eigen::Ref<const RowMat<T>>& b, Eigen::Map<RowMat<double>> c,
         bool accumulate) {
  auto product = [&](auto&& lhs, auto&& rhs) {
    if constexpr (std::is_same_v<T, double>) {
      if (accumulate) {
        c.noalias() += lhs * rhs;
      } else {
        c.noalias() = lhs * rhs;
      }
    } else {
      RowMat<float> tmp(m, n);
      tmp.noalias() = lhs * rhs;
      if (accumulate) {
        c += tmp.template cast<double>();
      } else {
        c = tmp.template cast<double>();
      }
    }
  };
  (void)k;
  if (!trans_a && !trans_b) product(a, b);
  if (!trans_a && trans_b) product(a, b.transpose());
  if (trans_a && !trans_b) product(a.transpose(), b);
  if (trans_a && trans_b) product(a.transpose(), b.transpose());
}

}  // namespace

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c, bool accumulate) {
  const auto M = static_cast<Eigen::Index>(m);
  const auto N = static_cast<Eigen::Index>(n);
  const auto K = static_cast<Eigen::Index>(k);
  Eigen::Map<const RowMat<double>> amap(a, trans_a ? K : M, trans_a ? M : K);
  Eigen::Map<const RowMat<double>> bmap(b, trans_b ? N : K, trans_b ? K : N);
  Eigen::Map<RowMat<double>> cmap(c, M, N);
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (!accumulate) cmap.setZero();
    return;
  }
  if (matmul_precision() == MatmulPrecision::f32) {
    const RowMat<float> af = amap.cast<float>();
    const RowMat<float> bf = bmap.cast<float>();
    run<float>(trans_a, trans_b, M, N, K, af, bf, cmap, accumulate);
  } else {
    run<double>(trans_a, trans_b, M, N, K, amap, bmap, cmap, accumulate);
  }
}

}  // namespace hflab::nn::detail
