// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

namespace hflab::nn::detail {

/// C (m x n) = op(A) op(B), or C += ... when `accumulate`. All operands are
/// contiguous row-major; op(A) is m x k (A stored k x m when trans_a).
/// Honors the thread's MatmulPrecision.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c, bool accumulate);

}  // namespace hflab::nn::detail
