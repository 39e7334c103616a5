// SPDX-License-Identifier: Apache-2.0
#include "hflab/backtest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>

#include "hflab/error.hpp"
#include "hflab/train.hpp"

namespace hflab::backtest {

std::size_t SignalMatrix::column(std::size_t horizon) const {
  const auto it = std::find(horizons.begin(), horizons.end(), horizon);
  if (it == horizons.end()) raise(ErrorCode::MissingModel, "no signal for horizon " + std::to_string(horizon));
  return static_cast<std::size_t>(it - horizons.begin());
}

SignalMatrix make_signal_matrix(std::vector<std::size_t> horizons, std::size_t ticks) {
  SignalMatrix m;
  m.ticks = ticks;
  m.values.assign(ticks * horizons.size(), std::numeric_limits<double>::quiet_NaN());
  m.horizons = std::move(horizons);
  return m;
}

SignalMatrix generate_signals(std::span<const models::Model* const> models, const lob::SnapshotStream& stream,
                              std::size_t lookback, features::MidMode mode) {
  std::vector<std::size_t> horizons;
  for (const auto* m : models) {
    if (!m) raise(ErrorCode::MissingModel, "null model");
    if (m->spec().lookback != lookback) {
      raise(ErrorCode::ModelHorizonMismatch, "model look-back " + std::to_string(m->spec().lookback) +
                                                 " differs from " + std::to_string(lookback));
    }
    if (std::find(horizons.begin(), horizons.end(), m->spec().horizon) != horizons.end()) {
      raise(ErrorCode::ModelHorizonMismatch, "two models for horizon " + std::to_string(m->spec().horizon));
    }
    horizons.push_back(m->spec().horizon);
  }
  SignalMatrix out = make_signal_matrix(horizons, stream.snapshots.size());
  for (std::size_t j = 0; j < models.size(); ++j) {
    const std::size_t h = horizons[j];
    if (stream.snapshots.size() <= h) continue;
    auto rows = std::make_shared<const std::vector<features::FeatureRow>>(
        features::build_feature_rows(stream, h, mode));
    if (rows->size() < lookback) continue;
    std::vector<std::size_t> ends(rows->size() - lookback + 1);
    std::iota(ends.begin(), ends.end(), lookback - 1);
    const train::WindowSet set(rows, lookback, h, ends);
    const auto preds = train::predict(*models[j], set);
    for (std::size_t i = 0; i < ends.size(); ++i) out.at(ends[i] + h, j) = preds[i];
  }
  return out;
}

Aggregate aggregate(std::span<const double> signals, ZeroSignal zero) {
  Aggregate a;
  if (signals.empty()) return a;
  bool all_pos = true;
  bool all_neg = true;
  for (double s : signals) {
    a.sum += s;
    if (!(s > 0.0)) all_pos = false;
    const bool sell = zero == ZeroSignal::as_sell ? s <= 0.0 : s < 0.0;
    if (!sell) all_neg = false;
  }
  a.unanimous_sign = all_pos ? 1 : (all_neg ? -1 : 0);
  a.magnitude = std::abs(a.sum);
  return a;
}

void Sizing::validate() const {
  if (thresholds.empty()) raise(ErrorCode::MalformedLadder, "ladder without thresholds");
  if (quantities.size() != thresholds.size() + 1) {
    raise(ErrorCode::MalformedLadder, std::to_string(thresholds.size()) + " thresholds need " +
                                          std::to_string(thresholds.size() + 1) + " quantities");
  }
  for (std::size_t i = 1; i < thresholds.size(); ++i) {
    if (!(thresholds[i] < thresholds[i - 1])) raise(ErrorCode::MalformedLadder, "thresholds must strictly descend");
  }
  for (std::size_t i = 0; i < quantities.size(); ++i) {
    if (!(quantities[i] > 0.0)) raise(ErrorCode::MalformedLadder, "ladder quantities must be positive");
    if (i > 0 && !(quantities[i] < quantities[i - 1])) {
      raise(ErrorCode::MalformedLadder, "ladder quantities must strictly descend");
    }
  }
}

double trade_size(double magnitude, const std::optional<Sizing>& sizing, double fixed_qty) {
  if (!sizing) return fixed_qty;
  sizing->validate();
  for (std::size_t i = 0; i < sizing->thresholds.size(); ++i) {
    if (magnitude >= sizing->thresholds[i]) return sizing->quantities[i];
  }
  return sizing->quantities.back();
}

std::vector<double> ladder_quantities(std::size_t thresholds) {
  if (thresholds == 2) return {0.15, 0.1, 0.05};
  if (thresholds == 5) return {0.15, 0.125, 0.1, 0.075, 0.05, 0.025};
  raise(ErrorCode::InvalidConfig, "sizing ladders have 2 or 5 thresholds");
}

void BacktestConfig::validate() const {
  if (main_horizon == 0) raise(ErrorCode::InvalidConfig, "main horizon must be positive");
  if (signal_horizons.empty()) raise(ErrorCode::InvalidConfig, "no signal horizons");
  if (!(trade_qty > 0.0)) raise(ErrorCode::InvalidConfig, "trade quantity must be positive");
  if (!(slippage_rate >= 0.0)) raise(ErrorCode::InvalidConfig, "slippage rate must be non-negative");
  if (min_threshold && !(*min_threshold >= 0.0)) raise(ErrorCode::InvalidConfig, "minimum threshold must be >= 0");
  if (sizing) sizing->validate();
}

std::vector<std::size_t> centred_horizons(std::size_t k, std::size_t main_horizon) {
  if (k == 0 || k % 2 == 0) raise(ErrorCode::InvalidConfig, "signal count must be odd, got " + std::to_string(k));
  const std::size_t half = (k - 1) / 2;
  if (main_horizon <= half) raise(ErrorCode::InvalidConfig, "signal count reaches horizons below 1");
  std::vector<std::size_t> out;
  for (std::size_t h = main_horizon - half; h <= main_horizon + half; ++h) out.push_back(h);
  return out;
}

std::vector<std::size_t> strategy_horizons(int strategy, std::size_t main_horizon) {
  switch (strategy) {
    case 1: return {main_horizon};
    case 2:
      if (main_horizon <= 2) raise(ErrorCode::InvalidConfig, "strategy 2 needs a main horizon above 2");
      return {main_horizon - 2, main_horizon, main_horizon + 2};
    case 3: return centred_horizons(5, main_horizon);
    default: raise(ErrorCode::InvalidConfig, "strategy must be 1, 2 or 3");
  }
}

double trade_pnl(Side side, double qty, double open_price, double close_price, double slippage_rate) {
  const double gross = side == Side::long_side ? qty * (close_price - open_price) : qty * (open_price - close_price);
  return gross - slippage_rate * qty * (open_price + close_price);
}

TradeLedger run_strategy(const lob::SnapshotStream& stream, const SignalMatrix& signals, const BacktestConfig& cfg) {
  cfg.validate();
  const std::size_t n = stream.snapshots.size();
  if (signals.ticks != n) {
    raise(ErrorCode::SignalStreamMismatch, "signal matrix has " + std::to_string(signals.ticks) +
                                               " ticks, stream has " + std::to_string(n));
  }
  std::vector<std::size_t> cols;
  for (auto h : cfg.signal_horizons) cols.push_back(signals.column(h));
  const double k = static_cast<double>(cols.size());

  TradeLedger ledger;
  ledger.horizons = cfg.signal_horizons;
  ledger.config = cfg;
  std::vector<double> current(cols.size());
  double running = 0.0;
  std::size_t t = cfg.trade_from_tick;
  while (t < n) {
    bool ready = true;
    for (std::size_t j = 0; j < cols.size(); ++j) {
      current[j] = signals.at(t, cols[j]);
      if (std::isnan(current[j])) ready = false;
    }
    if (!ready) {
      ++t;
      continue;
    }
    const Aggregate agg = aggregate(current, ZeroSignal::as_sell);
    if (agg.unanimous_sign == 0 || (cfg.min_threshold && agg.magnitude < *cfg.min_threshold * k)) {
      ++t;
      continue;
    }
    const std::size_t open = t + cfg.delay_ticks;
    const std::size_t close = t + cfg.main_horizon + cfg.delay_ticks;
    if (close >= n) {
      ++ledger.discarded;
      break;
    }
    Trade trade;
    trade.decision_tick = t;
    trade.open_tick = open;
    trade.close_tick = close;
    trade.side = agg.unanimous_sign > 0 ? Side::long_side : Side::short_side;
    trade.qty = trade_size(agg.magnitude, cfg.sizing, cfg.trade_qty);
    trade.open_price = features::weighted_midprice(stream.snapshots[open], cfg.mid_mode);
    trade.close_price = features::weighted_midprice(stream.snapshots[close], cfg.mid_mode);
    trade.signals = current;
    trade.magnitude = agg.magnitude;
    trade.pnl = trade_pnl(trade.side, trade.qty, trade.open_price, trade.close_price, cfg.slippage_rate);
    running += trade.pnl;
    ledger.cumulative_pnl.push_back(running);
    ledger.trades.push_back(std::move(trade));
    t = close;
  }
  return ledger;
}

double percentile(std::vector<double> values, double p) {
  values.erase(std::remove_if(values.begin(), values.end(), [](double v) { return !std::isfinite(v); }),
               values.end());
  if (values.empty()) raise(ErrorCode::TooFewTrades, "percentile of an empty sample");
  if (!(p >= 0.0 && p <= 100.0)) raise(ErrorCode::InvalidConfig, "percentile outside [0, 100]");
  std::sort(values.begin(), values.end());
  const double pos = p / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

namespace {

std::vector<double> calibration_sums(const SignalMatrix& signals, std::span<const std::size_t> horizons,
                                     std::size_t from, std::size_t to, bool per_signal) {
  std::vector<std::size_t> cols;
  for (auto h : horizons) cols.push_back(signals.column(h));
  std::vector<double> out;
  for (std::size_t t = from; t < std::min(to, signals.ticks); ++t) {
    double sum = 0.0;
    bool ok = true;
    for (auto c : cols) {
      const double v = signals.at(t, c);
      if (std::isnan(v)) ok = false;
      sum += v;
    }
    if (!ok) continue;
    if (per_signal) {
      for (auto c : cols) out.push_back(std::abs(signals.at(t, c)));
    } else {
      out.push_back(std::abs(sum));
    }
  }
  if (out.empty()) raise(ErrorCode::EmptySplit, "no complete signals in the calibration period");
  return out;
}

}  // namespace

Sizing calibrate_sizing(const SignalMatrix& signals, std::span<const std::size_t> horizons, std::size_t thresholds,
                        std::size_t from, std::size_t to) {
  std::vector<double> pct;
  if (thresholds == 2) pct = {80, 50};
  else if (thresholds == 5) pct = {90, 75, 60, 45, 30};
  else raise(ErrorCode::InvalidConfig, "sizing ladders have 2 or 5 thresholds");
  const auto sums = calibration_sums(signals, horizons, from, to, false);
  Sizing s;
  for (double p : pct) s.thresholds.push_back(percentile(sums, p));
  s.quantities = ladder_quantities(thresholds);
  // Ties in a flat calibration sample would break strict descent.
  for (std::size_t i = 1; i < s.thresholds.size(); ++i) {
    if (!(s.thresholds[i] < s.thresholds[i - 1])) s.thresholds[i] = std::nextafter(s.thresholds[i - 1], -1.0);
  }
  return s;
}

double calibrate_min_threshold(const SignalMatrix& signals, std::span<const std::size_t> horizons, std::size_t from,
                               std::size_t to) {
  return percentile(calibration_sums(signals, horizons, from, to, true), 10.0);
}

}  // namespace hflab::backtest
