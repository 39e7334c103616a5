// SPDX-License-Identifier: Apache-2.0
#include "hflab/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "hflab/error.hpp"

namespace hflab::features {

double weighted_midprice(const lob::LobSnapshot& s, MidMode mode) {
  const double pa = s.asks[0].price;
  const double qa = s.asks[0].qty;
  const double pb = s.bids[0].price;
  const double qb = s.bids[0].qty;
  switch (mode) {
    case MidMode::literal:
      return (qa * pa + qb * pb) / 2.0;
    case MidMode::microprice: {
      const double total = qa + qb;
      if (total == 0.0) raise(ErrorCode::ZeroQuantities, "level-1 quantities sum to zero");
      return (qa * pb + qb * pa) / total;
    }
  }
  return 0.0;
}

lob::MidpriceFn midprice_fn(MidMode mode) {
  return [mode](const lob::LobSnapshot& s) { return weighted_midprice(s, mode); };
}

double log_return(double p_now, double p_later) {
  if (!(p_now > 0.0) || !(p_later > 0.0)) {
    raise(ErrorCode::NonPositivePrice,
          "log-return needs positive prices, got " + std::to_string(p_now) + " and " + std::to_string(p_later));
  }
  return std::log(p_later / p_now);
}

std::vector<FeatureRow> build_feature_rows(const lob::SnapshotStream& stream, std::size_t tau, MidMode mode) {
  if (tau == 0) raise(ErrorCode::InvalidConfig, "horizon must be at least 1");
  if (stream.size() <= tau) {
    raise(ErrorCode::StreamTooShort, "stream of " + std::to_string(stream.size()) +
                                         " snapshots is too short for horizon " + std::to_string(tau));
  }
  std::vector<double> mids(stream.size());
  for (std::size_t i = 0; i < stream.size(); ++i) mids[i] = weighted_midprice(stream[i], mode);

  std::vector<FeatureRow> rows;
  rows.reserve(stream.size() - tau);
  for (std::size_t t = tau; t < stream.size(); ++t) {
    const auto& s = stream[t];
    FeatureRow row{};
    for (std::size_t l = 0; l < kFeatureLevels; ++l) {
      row[col::kBidPrice + l] = s.bids[l].price;
      row[col::kBidQty + l] = s.bids[l].qty;
      row[col::kAskPrice + l] = s.asks[l].price;
      row[col::kAskQty + l] = s.asks[l].qty;
    }
    row[col::kLaggedReturn] = log_return(mids[t - tau], mids[t]);
    row[col::kMidprice] = mids[t];
    rows.push_back(row);
  }
  return rows;
}

void normalize_window(std::span<const FeatureRow> rows, std::span<double> out, std::span<NormStat> stats) {
  const std::size_t n = rows.size();
  if (n < 2) raise(ErrorCode::ShapeMismatch, "normalization window needs at least 2 rows");
  if (out.size() != n * kNumFeatures || stats.size() != kNumFeatures) {
    raise(ErrorCode::ShapeMismatch, "normalization output buffers have the wrong size");
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t c = 0; c < kNumFeatures; ++c) {
    double sum = 0.0;
    for (std::size_t r = 0; r < n; ++r) sum += rows[r][c];
    const double mean = sum * inv_n;
    double ss = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      const double d = rows[r][c] - mean;
      ss += d * d;
    }
    const double sd = std::sqrt(ss * inv_n);
    stats[c] = {mean, sd};
    // Rounding in the mean leaves ~1e-16 relative residue on constant columns.
    const bool degenerate = sd <= 1e-12 * std::max(1.0, std::abs(mean));
    for (std::size_t r = 0; r < n; ++r) {
      out[r * kNumFeatures + c] = degenerate ? 0.0 : (rows[r][c] - mean) / sd;
    }
  }
}

NormalizedMatrix online_normalize(std::span<const FeatureRow> window) {
  NormalizedMatrix m;
  m.values.resize(window.size() * kNumFeatures);
  m.stats.resize(kNumFeatures);
  normalize_window(window, m.values, m.stats);
  return m;
}

std::size_t window_count(std::size_t n_rows, std::size_t lookback, std::size_t tau, std::size_t stride) noexcept {
  if (lookback == 0 || stride == 0 || n_rows < lookback + tau) return 0;
  const std::size_t span = n_rows - tau - lookback;  // last end minus first end
  return span / stride + 1;
}

std::vector<double> forward_targets(std::span<const FeatureRow> rows, std::size_t tau) {
  std::vector<double> targets(rows.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t t = 0; t + tau < rows.size(); ++t) {
    targets[t] = log_return(rows[t][col::kMidprice], rows[t + tau][col::kMidprice]);
  }
  return targets;
}

std::vector<FeatureWindow> make_windows(std::span<const FeatureRow> rows, std::size_t lookback, std::size_t tau,
                                        std::size_t stride) {
  if (lookback < 2) raise(ErrorCode::InvalidConfig, "look-back must be at least 2");
  if (stride == 0) raise(ErrorCode::InvalidConfig, "stride must be at least 1");
  const std::size_t count = window_count(rows.size(), lookback, tau, stride);
  if (count == 0) {
    raise(ErrorCode::StreamTooShort, std::to_string(rows.size()) + " rows cannot fill a window of " +
                                         std::to_string(lookback) + " with horizon " + std::to_string(tau));
  }
  std::vector<FeatureWindow> windows;
  windows.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t end = lookback - 1 + k * stride;
    FeatureWindow w;
    w.lookback = lookback;
    w.rows.resize(lookback * kNumFeatures);
    w.norm_stats.resize(kNumFeatures);
    normalize_window(rows.subspan(end + 1 - lookback, lookback), w.rows, w.norm_stats);
    w.target = log_return(rows[end][col::kMidprice], rows[end + tau][col::kMidprice]);
    w.end_row = end;
    w.t_index = end + tau;
    windows.push_back(std::move(w));
  }
  return windows;
}

Dataset make_dataset(const lob::SnapshotStream& stream, std::size_t tau, MidMode mode) {
  Dataset d;
  d.horizon = static_cast<std::uint32_t>(tau);
  d.rows = build_feature_rows(stream, tau, mode);
  d.targets = forward_targets(d.rows, tau);
  return d;
}

}  // namespace hflab::features
