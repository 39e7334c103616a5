// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hflab/features.hpp"
#include "hflab/lob.hpp"
#include "hflab/models.hpp"

namespace hflab::backtest {

/// Per-tick, per-horizon predicted log-returns over a deduped stream. NaN
/// marks ticks where a horizon has no signal yet.
struct SignalMatrix {
  std::vector<std::size_t> horizons;
  std::size_t ticks = 0;
  std::vector<double> values;  // ticks x horizons.size(), row-major

  double at(std::size_t tick, std::size_t column) const { return values[tick * horizons.size() + column]; }
  double& at(std::size_t tick, std::size_t column) { return values[tick * horizons.size() + column]; }
  /// Column of `horizon`; throws MissingModel.
  std::size_t column(std::size_t horizon) const;
};

SignalMatrix make_signal_matrix(std::vector<std::size_t> horizons, std::size_t ticks);

/// signal[t][h] is model_h's point forecast for the window ending at tick t.
/// The features lag by the model's horizon, so the first signal of horizon h
/// is at tick lookback - 1 + h. Throws ModelHorizonMismatch when a model's
/// horizon or look-back disagrees with its slot.
SignalMatrix generate_signals(std::span<const models::Model* const> models, const lob::SnapshotStream& stream,
                              std::size_t lookback, features::MidMode mode = features::MidMode::literal);

enum class ZeroSignal {
  /// A zero breaks unanimity.
  strict,
  /// A zero counts as a sell vote.
  as_sell,
};

struct Aggregate {
  int unanimous_sign = 0;  // +1, -1, or 0 for none
  double sum = 0.0;
  double magnitude = 0.0;
};

Aggregate aggregate(std::span<const double> signals, ZeroSignal zero = ZeroSignal::strict);

/// Quantity ladder: magnitude >= thresholds[i] (first match, thresholds
/// descending) trades quantities[i]; below every threshold trades the last.
struct Sizing {
  std::vector<double> thresholds;
  std::vector<double> quantities;

  /// Throws MalformedLadder.
  void validate() const;
};

/// Fixed `fixed_qty` without a ladder.
double trade_size(double magnitude, const std::optional<Sizing>& sizing, double fixed_qty);

/// Quantities of the 2- and 5-threshold ladders.
std::vector<double> ladder_quantities(std::size_t thresholds);

struct BacktestConfig {
  std::size_t main_horizon = 28;
  std::vector<std::size_t> signal_horizons{28};
  std::size_t delay_ticks = 2;
  double trade_qty = 0.1;
  double slippage_rate = 0.000002;
  std::optional<Sizing> sizing;
  /// Per-signal unit; the entry bar is min_threshold * number of signals.
  std::optional<double> min_threshold;
  /// First tick at which entries are considered.
  std::size_t trade_from_tick = 0;
  features::MidMode mid_mode = features::MidMode::literal;

  /// Throws InvalidConfig / MalformedLadder.
  void validate() const;
};

/// Signal horizons of Strategies 1 (main only), 2 (main and +/-2) and 3
/// (main-2 .. main+2). Throws InvalidConfig.
std::vector<std::size_t> strategy_horizons(int strategy, std::size_t main_horizon);

/// k consecutive horizons centred on `main`; k must be odd.
std::vector<std::size_t> centred_horizons(std::size_t k, std::size_t main_horizon);

enum class Side { long_side, short_side };

struct Trade {
  std::size_t decision_tick = 0;
  std::size_t open_tick = 0;
  std::size_t close_tick = 0;
  Side side = Side::long_side;
  double qty = 0.0;
  double open_price = 0.0;
  double close_price = 0.0;
  std::vector<double> signals;
  double magnitude = 0.0;
  double pnl = 0.0;
};

/// qty (close - open) for longs, qty (open - close) for shorts, minus
/// slippage_rate * qty * (open + close).
double trade_pnl(Side side, double qty, double open_price, double close_price, double slippage_rate);

struct TradeLedger {
  std::vector<std::size_t> horizons;
  std::vector<Trade> trades;
  std::vector<double> cumulative_pnl;
  /// Entries whose close tick lies past the end of the stream.
  std::size_t discarded = 0;
  BacktestConfig config;

  double final_pnl() const { return cumulative_pnl.empty() ? 0.0 : cumulative_pnl.back(); }
};

/// Sequential scan: at each tick without an open position, enter when the
/// configured signals agree in sign (zero votes sell) and, if set, the
/// aggregated magnitude reaches min_threshold * k. Entry executes at t + delay
/// and exits at t + main_horizon + delay at the weighted midprice; scanning
/// resumes at the exit tick. Throws SignalStreamMismatch, MissingModel.
TradeLedger run_strategy(const lob::SnapshotStream& stream, const SignalMatrix& signals, const BacktestConfig& cfg);

/// Linear-interpolated percentile (p in [0, 100]) of finite values.
double percentile(std::vector<double> values, double p);

/// Ladder thresholds from percentiles of |aggregated signal| over ticks
/// [from, to): {80, 50} for 2 thresholds, {90, 75, 60, 45, 30} for 5.
Sizing calibrate_sizing(const SignalMatrix& signals, std::span<const std::size_t> horizons, std::size_t thresholds,
                        std::size_t from, std::size_t to);

/// 10th percentile of per-signal |value| over ticks [from, to).
double calibrate_min_threshold(const SignalMatrix& signals, std::span<const std::size_t> horizons, std::size_t from,
                               std::size_t to);

// ---------------------------------------------------------------- analysis

struct CorrelationTable {
  std::vector<std::string> names;  // "pnl", then "signal_h{h}"
  std::vector<double> values;      // names.size() squared, row-major

  double at(std::size_t i, std::size_t j) const { return values[i * names.size() + j]; }
};

/// Pearson correlations among per-trade pnl and entry signals. Throws
/// TooFewTrades (< 2 trades) or DegenerateColumn.
CorrelationTable correlation_table(const TradeLedger& ledger);

/// Trades sorted by ascending magnitude, cut into consecutive batches of
/// `batch` (partial tail dropped); correlation of magnitude and pnl per batch.
/// Throws TooFewTrades.
std::vector<double> magnitude_pnl_profile(const TradeLedger& ledger, std::size_t batch = 200);

struct WinBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t wins = 0;
  std::size_t total = 0;
  double ratio = 0.0;
};

/// Equal-count magnitude bins (trade i of n sorted goes to bin i * bins / n).
/// Throws TooFewTrades on an empty ledger, InvalidConfig for zero bins.
std::vector<WinBin> winning_ratio_by_magnitude(const TradeLedger& ledger, std::size_t bins);

struct SweepEntry {
  std::size_t count = 0;
  std::vector<std::size_t> horizons;
  TradeLedger ledger;
};

/// One unanimity run per signal count k over horizons centred on `main`.
/// Throws MissingModel when a needed horizon is absent from `signals`.
std::vector<SweepEntry> signal_count_sweep(const lob::SnapshotStream& stream, const SignalMatrix& signals,
                                           const BacktestConfig& base, std::size_t main_horizon,
                                           std::span<const std::size_t> counts);

// ---------------------------------------------------------------- files

void write_ledger_csv(const std::filesystem::path& path, const TradeLedger& ledger);
/// Rebuilds trades, horizons and the cumulative series from a ledger CSV.
TradeLedger read_ledger_csv(const std::filesystem::path& path);
void write_cum_pnl_csv(const std::filesystem::path& path, const TradeLedger& ledger);
void write_summary_json(const std::filesystem::path& path, const TradeLedger& ledger);

void write_signals_csv(const std::filesystem::path& path, const SignalMatrix& signals);
SignalMatrix read_signals_csv(const std::filesystem::path& path);

}  // namespace hflab::backtest
