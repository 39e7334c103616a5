// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>

namespace hflab::metrics {

enum class R2Baseline {
  /// Total variance around the evaluated set's own mean.
  test_mean,
  /// Total sum of squares around zero (a no-change forecast).
  zero,
};

/// 1 - sum (y - p)^2 / sum (y - baseline)^2. Throws ShapeMismatch on length
/// mismatch or empty input, DegenerateTargets on zero total variance.
double r2_score(std::span<const double> preds, std::span<const double> targets,
                R2Baseline baseline = R2Baseline::test_mean);

struct ClassRatios {
  double buy = 0.0;
  double sell = 0.0;
};

/// True positive rates of the strict-sign classes. Zero targets are left out
/// of both classes and a zero prediction is never a hit. Throws EmptyClass.
ClassRatios classification_ratios(std::span<const double> preds, std::span<const double> targets);

/// As classification_ratios, each sample weighted by |target|.
ClassRatios weighted_classification_ratios(std::span<const double> preds, std::span<const double> targets);

/// Pearson correlation. Throws ShapeMismatch (length < 2 or mismatch) and
/// DegenerateColumn when either side has zero variance.
double pearson(std::span<const double> a, std::span<const double> b);

}  // namespace hflab::metrics
