// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "hflab/lob.hpp"

namespace hflab::features {

/// Book levels per side that feed the feature vector (innermost first).
inline constexpr std::size_t kFeatureLevels = 9;
inline constexpr std::size_t kNumFeatures = 4 * kFeatureLevels + 2;  // 38

/// Column layout of a FeatureRow.
namespace col {
inline constexpr std::size_t kBidPrice = 0;
inline constexpr std::size_t kBidQty = kFeatureLevels;
inline constexpr std::size_t kAskPrice = 2 * kFeatureLevels;
inline constexpr std::size_t kAskQty = 3 * kFeatureLevels;
inline constexpr std::size_t kLaggedReturn = 4 * kFeatureLevels;
inline constexpr std::size_t kMidprice = 4 * kFeatureLevels + 1;
}  // namespace col

using FeatureRow = std::array<double, kNumFeatures>;

enum class MidMode {
  /// (q_ask * p_ask + q_bid * p_bid) / 2 on level 1, as printed.
  literal,
  /// (q_ask * p_bid + q_bid * p_ask) / (q_ask + q_bid).
  microprice,
};

double weighted_midprice(const lob::LobSnapshot& s, MidMode mode = MidMode::literal);
lob::MidpriceFn midprice_fn(MidMode mode = MidMode::literal);

/// log(p_later / p_now); throws NonPositivePrice.
double log_return(double p_now, double p_later);

/// One row per snapshot with index >= tau; row k describes snapshot k + tau.
/// Throws StreamTooShort when the stream has <= tau snapshots.
std::vector<FeatureRow> build_feature_rows(const lob::SnapshotStream& stream, std::size_t tau,
                                           MidMode mode = MidMode::literal);

struct NormStat {
  double mean = 0.0;
  double std = 0.0;  // population
};

/// Column-wise z-scoring of an L x 38 row-major block in place of `out`,
/// using only the block's own values. Zero-variance columns become zeros.
void normalize_window(std::span<const FeatureRow> rows, std::span<double> out,
                      std::span<NormStat> stats);

struct NormalizedMatrix {
  std::vector<double> values;  // rows x kNumFeatures, row-major
  std::vector<NormStat> stats;
};

/// Standalone form of normalize_window for an arbitrary L x 38 matrix.
NormalizedMatrix online_normalize(std::span<const FeatureRow> window);

struct FeatureWindow {
  std::size_t lookback = 0;
  std::vector<double> rows;  // lookback x kNumFeatures normalized, row-major
  std::vector<NormStat> norm_stats;
  double target = 0.0;
  /// Index of the window's last row in the feature-row sequence.
  std::size_t end_row = 0;
  /// Index of the window's last row in the deduped snapshot stream.
  std::size_t t_index = 0;
};

/// Windows ending at rows t in [L-1, rows-tau-1] (every `stride`), each paired
/// with log(mid_{t+tau} / mid_t) read from the midprice column. `tau` is also
/// the lag used when the rows were built, so t_index = t + tau.
std::vector<FeatureWindow> make_windows(std::span<const FeatureRow> rows, std::size_t lookback,
                                        std::size_t tau, std::size_t stride = 1);

/// Number of windows make_windows would produce.
std::size_t window_count(std::size_t n_rows, std::size_t lookback, std::size_t tau,
                         std::size_t stride = 1) noexcept;

/// Forward log-return targets aligned with rows; NaN where t + tau is past the end.
std::vector<double> forward_targets(std::span<const FeatureRow> rows, std::size_t tau);

/// t-statistic of gamma in dy_t = a + gamma y_{t-1} + sum_i b_i dy_{t-i} + e_t.
/// Throws StreamTooShort or SingularRegression.
double adf_statistic(std::span<const double> series, std::size_t max_lag = 0);

/// A featurized dataset: rows plus the forward target at `horizon` (NaN when
/// undefined).
struct Dataset {
  std::uint32_t horizon = 0;
  std::vector<FeatureRow> rows;
  std::vector<double> targets;
};

Dataset make_dataset(const lob::SnapshotStream& stream, std::size_t tau, MidMode mode = MidMode::literal);

/// Binary layout (little-endian): magic "HFLABFEA", version byte (1), rows
/// u64, cols u64 (= 39), horizon u32, then rows x cols f64 row-major with the
/// target in the last column.
void write_dataset_binary(const std::filesystem::path& path, const Dataset& data);
Dataset read_dataset_binary(const std::filesystem::path& path);

/// CSV: header `f0..f37,target_h{tau}` then one row per line.
void write_dataset_csv(const std::filesystem::path& path, const Dataset& data);
Dataset read_dataset_csv(const std::filesystem::path& path);

}  // namespace hflab::features
