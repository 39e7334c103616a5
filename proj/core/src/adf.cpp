// SPDX-License-Identifier: Apache-2.0
#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "hflab/error.hpp"
#include "hflab/features.hpp"

namespace hflab::features {

double adf_statistic(std::span<const double> series, std::size_t max_lag) {
  const std::size_t n = series.size();
  if (n <= max_lag + 2) {
    raise(ErrorCode::StreamTooShort, "ADF needs more than max_lag + 2 observations");
  }
  // Regression rows t = max_lag + 1 .. n - 1 (dy_t needs t >= 1, lags need t - i >= 1).
  const std::size_t nobs = n - 1 - max_lag;
  const std::size_t k = 2 + max_lag;
  if (nobs <= k) {
    raise(ErrorCode::StreamTooShort, "ADF regression has no residual degrees of freedom");
  }

  Eigen::MatrixXd x(static_cast<Eigen::Index>(nobs), static_cast<Eigen::Index>(k));
  Eigen::VectorXd y(static_cast<Eigen::Index>(nobs));
  auto diff = [&](std::size_t t) { return series[t] - series[t - 1]; };
  for (std::size_t r = 0; r < nobs; ++r) {
    const std::size_t t = r + max_lag + 1;
    const auto row = static_cast<Eigen::Index>(r);
    y(row) = diff(t);
    x(row, 0) = 1.0;
    x(row, 1) = series[t - 1];
    for (std::size_t i = 1; i <= max_lag; ++i) x(row, static_cast<Eigen::Index>(1 + i)) = diff(t - i);
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() < static_cast<Eigen::Index>(k)) {
    raise(ErrorCode::SingularRegression, "ADF design matrix has rank " + std::to_string(qr.rank()) +
                                             " < " + std::to_string(k));
  }
  const Eigen::VectorXd beta = qr.solve(y);
  const Eigen::VectorXd resid = y - x * beta;
  const double sigma2 = resid.squaredNorm() / static_cast<double>(nobs - k);
  const Eigen::MatrixXd xtx_inv = (x.transpose() * x).inverse();
  const double se = std::sqrt(sigma2 * xtx_inv(1, 1));
  return beta(1) / se;
}

}  // namespace hflab::features
