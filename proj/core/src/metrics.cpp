// SPDX-License-Identifier: Apache-2.0
#include "hflab/metrics.hpp"

#include <cmath>
#include <string>

#include "hflab/error.hpp"

namespace hflab::metrics {
namespace {

void check_lengths(std::span<const double> a, std::span<const double> b, std::size_t min_len) {
  if (a.size() != b.size() || a.size() < min_len) {
    raise(ErrorCode::ShapeMismatch,
          "metric inputs of length " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
}

ClassRatios ratios(std::span<const double> preds, std::span<const double> targets, bool weighted) {
  check_lengths(preds, targets, 1);
  double buy_hit = 0.0, buy_all = 0.0, sell_hit = 0.0, sell_all = 0.0;
  std::size_t n_buy = 0, n_sell = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double y = targets[i];
    const double w = weighted ? std::abs(y) : 1.0;
    if (y > 0.0) {
      ++n_buy;
      buy_all += w;
      if (preds[i] > 0.0) buy_hit += w;
    } else if (y < 0.0) {
      ++n_sell;
      sell_all += w;
      if (preds[i] < 0.0) sell_hit += w;
    }
  }
  if (n_buy == 0) raise(ErrorCode::EmptyClass, "no positive targets (buy class is empty)");
  if (n_sell == 0) raise(ErrorCode::EmptyClass, "no negative targets (sell class is empty)");
  return {buy_hit / buy_all, sell_hit / sell_all};
}

}  // namespace

double r2_score(std::span<const double> preds, std::span<const double> targets, R2Baseline baseline) {
  check_lengths(preds, targets, 1);
  double centre = 0.0;
  if (baseline == R2Baseline::test_mean) {
    for (double y : targets) centre += y;
    centre /= static_cast<double>(targets.size());
  }
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    ss_res += (targets[i] - preds[i]) * (targets[i] - preds[i]);
    ss_tot += (targets[i] - centre) * (targets[i] - centre);
  }
  if (!(ss_tot > 0.0)) raise(ErrorCode::DegenerateTargets, "targets have zero total variance");
  return 1.0 - ss_res / ss_tot;
}

ClassRatios classification_ratios(std::span<const double> preds, std::span<const double> targets) {
  return ratios(preds, targets, false);
}

ClassRatios weighted_classification_ratios(std::span<const double> preds, std::span<const double> targets) {
  return ratios(preds, targets, true);
}

double pearson(std::span<const double> a, std::span<const double> b) {
  check_lengths(a, b, 2);
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) raise(ErrorCode::DegenerateColumn, "correlation of a constant column");
  return sab / std::sqrt(saa * sbb);
}

}  // namespace hflab::metrics
