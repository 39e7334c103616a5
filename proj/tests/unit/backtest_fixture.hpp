// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "hflab/backtest.hpp"
#include "test_util.hpp"

namespace hflab::testing {

struct OracleTrade {
  std::size_t decision, open, close;
  backtest::Side side;
  double qty, open_price, close_price, pnl;
};

// 40 ticks, one signal horizon (5), two-tick delay. Level-1 quantities are 1,
// so the literal weighted midprice is the mid itself.
struct FortyTickFixture {
  lob::SnapshotStream stream;
  backtest::SignalMatrix signals;
  backtest::BacktestConfig config;
  std::vector<OracleTrade> trades;
  std::vector<double> cumulative;
  std::size_t discarded = 0;
};

inline FortyTickFixture forty_tick_fixture() {
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> mids(40);
  for (std::size_t i = 0; i < mids.size(); ++i) mids[i] = 20000.0 + 0.5 * static_cast<double>(i % 3);
  mids[5] = 20000.0;
  mids[10] = 20000.0;
  mids[12] = 20000.0;
  mids[17] = 20010.0;
  mids[19] = 20000.0;
  mids[24] = 20010.0;
  mids[32] = 20005.0;
  mids[37] = 20002.0;

  FortyTickFixture f;
  f.stream = stream_from_mids(mids);
  f.signals = backtest::make_signal_matrix({5}, 40);
  const double script[40] = {
      nan, nan, nan, 0.3,  0.2,  0.1,  -0.4, 0.2,  0.1, 0.4,   // 0-9
      0.5, 0.1, 0.2, -0.1, 0.3,  0.2,  0.1,  -0.7, 0.2, 0.1,   // 10-19
      0.2, 0.3, 0.1, 0.4,  nan,  nan,  nan,  nan,  nan, nan,   // 20-29
      0.6, 0.2, 0.1, -0.3, 0.2,  -0.2, 0.1,  0.25, 0.1, -0.1,  // 30-39
  };
  for (std::size_t t = 0; t < 40; ++t) f.signals.at(t, 0) = script[t];
  f.config.main_horizon = 5;
  f.config.signal_horizons = {5};
  f.config.delay_ticks = 2;
  f.config.trade_qty = 0.1;
  f.config.slippage_rate = 0.000002;

  using backtest::Side;
  // Hand-computed: pnl = 0.1 * move - 0.000002 * 0.1 * (open + close).
  f.trades = {
      {3, 5, 10, Side::long_side, 0.1, 20000.0, 20000.0, -0.008},
      {10, 12, 17, Side::long_side, 0.1, 20000.0, 20010.0, 0.991998},
      {17, 19, 24, Side::short_side, 0.1, 20000.0, 20010.0, -1.008002},
      {30, 32, 37, Side::long_side, 0.1, 20005.0, 20002.0, -0.3080014},
  };
  f.cumulative = {-0.008, 0.983998, -0.024004, -0.3320054};
  // The entry decided at tick 37 would close at tick 44.
  f.discarded = 1;
  return f;
}

// Straightforward restatement of the trading rules, used as an oracle.
inline backtest::TradeLedger reference_strategy(const lob::SnapshotStream& stream,
                                                const backtest::SignalMatrix& signals,
                                                const backtest::BacktestConfig& cfg) {
  backtest::TradeLedger out;
  out.horizons = cfg.signal_horizons;
  double running = 0.0;
  std::size_t t = cfg.trade_from_tick;
  const std::size_t n = stream.size();
  while (t < n) {
    std::vector<double> s;
    bool any_nan = false;
    for (auto h : cfg.signal_horizons) {
      s.push_back(signals.at(t, signals.column(h)));
      any_nan = any_nan || std::isnan(s.back());
    }
    if (any_nan) {
      ++t;
      continue;
    }
    double sum = 0.0;
    std::size_t pos = 0;
    for (double v : s) {
      sum += v;
      pos += v > 0.0;
    }
    int side = pos == s.size() ? 1 : (pos == 0 ? -1 : 0);
    if (cfg.min_threshold && std::abs(sum) < *cfg.min_threshold * static_cast<double>(s.size())) side = 0;
    if (side == 0) {
      ++t;
      continue;
    }
    if (t + cfg.main_horizon + cfg.delay_ticks >= n) {
      out.discarded = 1;
      break;
    }
    backtest::Trade tr;
    tr.decision_tick = t;
    tr.open_tick = t + cfg.delay_ticks;
    tr.close_tick = t + cfg.delay_ticks + cfg.main_horizon;
    tr.side = side > 0 ? backtest::Side::long_side : backtest::Side::short_side;
    tr.qty = cfg.trade_qty;
    if (cfg.sizing) {
      tr.qty = cfg.sizing->quantities.back();
      for (std::size_t i = 0; i < cfg.sizing->thresholds.size(); ++i) {
        if (std::abs(sum) >= cfg.sizing->thresholds[i]) {
          tr.qty = cfg.sizing->quantities[i];
          break;
        }
      }
    }
    const auto& a = stream[tr.open_tick];
    const auto& b = stream[tr.close_tick];
    tr.open_price = (a.asks[0].qty * a.asks[0].price + a.bids[0].qty * a.bids[0].price) / 2.0;
    tr.close_price = (b.asks[0].qty * b.asks[0].price + b.bids[0].qty * b.bids[0].price) / 2.0;
    const double move = tr.close_price - tr.open_price;
    tr.pnl = (side > 0 ? move : -move) * tr.qty - cfg.slippage_rate * tr.qty * (tr.open_price + tr.close_price);
    tr.signals = s;
    tr.magnitude = std::abs(sum);
    running += tr.pnl;
    out.cumulative_pnl.push_back(running);
    out.trades.push_back(tr);
    t = tr.close_tick;
  }
  return out;
}

// Random signal matrix over horizons 20..30 with a few NaN warm-up ticks.
inline backtest::SignalMatrix random_signal_matrix(std::mt19937_64& rng, std::size_t ticks) {
  std::vector<std::size_t> horizons;
  for (std::size_t h = 20; h <= 30; ++h) horizons.push_back(h);
  auto m = backtest::make_signal_matrix(horizons, ticks);
  std::normal_distribution<double> z(0.0, 1.0);
  std::normal_distribution<double> common(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> warm(0, 10);
  const std::size_t start = warm(rng);
  for (std::size_t t = 0; t < ticks; ++t) {
    const double c = common(rng);
    for (std::size_t j = 0; j < horizons.size(); ++j) {
      m.at(t, j) = t < start ? std::numeric_limits<double>::quiet_NaN() : 1e-4 * (c + 0.7 * z(rng));
    }
  }
  return m;
}

inline lob::SnapshotStream random_walk_stream(std::mt19937_64& rng, std::size_t ticks) {
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<double> mids{20000.0};
  while (mids.size() < ticks) mids.push_back(mids.back() + 0.5 * std::round(2.0 * z(rng)));
  return stream_from_mids(mids);
}

}  // namespace hflab::testing
