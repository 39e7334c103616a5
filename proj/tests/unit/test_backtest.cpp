// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <fstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "backtest_fixture.hpp"
#include "hflab/backtest.hpp"
#include "hflab/models.hpp"
#include "test_util.hpp"

using namespace hflab;
using namespace hflab::backtest;
using hflab::testing::code_of;

namespace {

void expect_same_ledger(const TradeLedger& a, const TradeLedger& b) {
  ASSERT_EQ(a.trades.size(), b.trades.size());
  EXPECT_EQ(a.discarded, b.discarded);
  for (std::size_t i = 0; i < a.trades.size(); ++i) {
    const auto& x = a.trades[i];
    const auto& y = b.trades[i];
    EXPECT_EQ(x.decision_tick, y.decision_tick);
    EXPECT_EQ(x.open_tick, y.open_tick);
    EXPECT_EQ(x.close_tick, y.close_tick);
    EXPECT_EQ(x.side, y.side);
    EXPECT_EQ(x.qty, y.qty);
    EXPECT_NEAR(x.pnl, y.pnl, 1e-9);
    EXPECT_NEAR(a.cumulative_pnl[i], b.cumulative_pnl[i], 1e-9);
  }
}

}  // namespace

TEST(Aggregate, Examples) {
  auto a = aggregate(std::vector<double>{0.1, 0.2, 0.05});
  EXPECT_EQ(a.unanimous_sign, 1);
  EXPECT_NEAR(a.sum, 0.35, 1e-15);
  EXPECT_EQ(aggregate(std::vector<double>{0.1, -0.2, 0.05}).unanimous_sign, 0);
  a = aggregate(std::vector<double>{-0.1, -0.1});
  EXPECT_EQ(a.unanimous_sign, -1);
  EXPECT_DOUBLE_EQ(a.magnitude, 0.2);
  EXPECT_EQ(aggregate(std::vector<double>{-0.1, 0.0}).unanimous_sign, 0);
  EXPECT_EQ(aggregate(std::vector<double>{-0.1, 0.0}, ZeroSignal::as_sell).unanimous_sign, -1);
}

TEST(TradeSize, LadderExamples) {
  const Sizing two{{2.0, 1.0}, ladder_quantities(2)};
  EXPECT_EQ(trade_size(2.5, two, 0.1), 0.15);
  EXPECT_EQ(trade_size(1.5, two, 0.1), 0.1);
  EXPECT_EQ(trade_size(0.3, two, 0.1), 0.05);
  EXPECT_EQ(trade_size(0.3, std::nullopt, 0.1), 0.1);
  EXPECT_EQ(ladder_quantities(5), (std::vector<double>{0.15, 0.125, 0.1, 0.075, 0.05, 0.025}));
  const Sizing bad{{1.0, 2.0}, ladder_quantities(2)};
  EXPECT_EQ(code_of([&] { bad.validate(); }), ErrorCode::MalformedLadder);
  const Sizing short_ladder{{2.0, 1.0}, {0.1}};
  EXPECT_EQ(code_of([&] { short_ladder.validate(); }), ErrorCode::MalformedLadder);
}

TEST(TradePnl, Examples) {
  EXPECT_NEAR(trade_pnl(Side::long_side, 0.1, 20000, 20000, 2e-6), -0.008, 1e-12);
  EXPECT_NEAR(trade_pnl(Side::long_side, 0.1, 20000, 20010, 2e-6), 0.991998, 1e-12);
  EXPECT_NEAR(trade_pnl(Side::short_side, 0.1, 20000, 20010, 2e-6), -1.008002, 1e-12);
}

TEST(Horizons, StrategiesAndSweep) {
  EXPECT_EQ(strategy_horizons(1, 28), (std::vector<std::size_t>{28}));
  EXPECT_EQ(strategy_horizons(2, 28), (std::vector<std::size_t>{26, 28, 30}));
  EXPECT_EQ(strategy_horizons(3, 28), (std::vector<std::size_t>{26, 27, 28, 29, 30}));
  EXPECT_EQ(centred_horizons(1, 25), (std::vector<std::size_t>{25}));
  EXPECT_EQ(centred_horizons(7, 25), (std::vector<std::size_t>{22, 23, 24, 25, 26, 27, 28}));
  EXPECT_EQ(code_of([] { centred_horizons(4, 25); }), ErrorCode::InvalidConfig);
  EXPECT_EQ(code_of([] { strategy_horizons(4, 25); }), ErrorCode::InvalidConfig);
}

TEST(RunStrategy, FortyTickOracleLedger) {
  const auto f = hflab::testing::forty_tick_fixture();
  const auto ledger = run_strategy(f.stream, f.signals, f.config);
  ASSERT_EQ(ledger.trades.size(), f.trades.size());
  EXPECT_EQ(ledger.discarded, f.discarded);
  for (std::size_t i = 0; i < f.trades.size(); ++i) {
    const auto& got = ledger.trades[i];
    const auto& want = f.trades[i];
    EXPECT_EQ(got.decision_tick, want.decision);
    EXPECT_EQ(got.open_tick, want.open);
    EXPECT_EQ(got.close_tick, want.close);
    EXPECT_EQ(got.side, want.side);
    EXPECT_EQ(got.qty, want.qty);
    EXPECT_EQ(got.open_price, want.open_price);
    EXPECT_EQ(got.close_price, want.close_price);
    EXPECT_NEAR(got.pnl, want.pnl, 1e-9);
    EXPECT_NEAR(ledger.cumulative_pnl[i], f.cumulative[i], 1e-9);
  }
}

TEST(RunStrategy, MatchesReferenceOnRandomInputs) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const auto stream = hflab::testing::random_walk_stream(rng, 400);
    const auto signals = hflab::testing::random_signal_matrix(rng, 400);
    BacktestConfig cfg;
    cfg.main_horizon = 25;
    cfg.signal_horizons = strategy_horizons(1 + trial % 3, 25);
    cfg.trade_from_tick = static_cast<std::size_t>(trial % 7);
    if (trial % 2) cfg.min_threshold = 0.5e-4;
    if (trial % 4 == 1) cfg.sizing = Sizing{{4e-4, 2e-4}, ladder_quantities(2)};
    expect_same_ledger(run_strategy(stream, signals, cfg), hflab::testing::reference_strategy(stream, signals, cfg));
  }
}

TEST(RunStrategy, Errors) {
  const auto f = hflab::testing::forty_tick_fixture();
  auto cfg = f.config;
  cfg.signal_horizons = {6};
  EXPECT_EQ(code_of([&] { run_strategy(f.stream, f.signals, cfg); }), ErrorCode::MissingModel);
  auto shorter = f.stream;
  shorter.snapshots.pop_back();
  EXPECT_EQ(code_of([&] { run_strategy(shorter, f.signals, f.config); }), ErrorCode::SignalStreamMismatch);
}

TEST(Percentile, LinearInterpolation) {
  EXPECT_DOUBLE_EQ(percentile({1, 2, 3, 4}, 50), 2.5);
  EXPECT_DOUBLE_EQ(percentile({4, 1, 3, 2}, 100), 4.0);
  EXPECT_DOUBLE_EQ(percentile({1, 2, 3, 4, std::nan("")}, 0), 1.0);
  EXPECT_NEAR(percentile({0, 10}, 80), 8.0, 1e-12);
}

TEST(Calibration, ThresholdsArePercentilesOfCalibrationPeriod) {
  std::mt19937_64 rng(2);
  const auto m = hflab::testing::random_signal_matrix(rng, 300);
  const auto hs = strategy_horizons(2, 25);
  const auto sizing = calibrate_sizing(m, hs, 2, 50, 200);
  std::vector<double> mags, single;
  for (std::size_t t = 50; t < 200; ++t) {
    double s = 0.0;
    for (auto h : hs) {
      s += m.at(t, m.column(h));
      single.push_back(std::abs(m.at(t, m.column(h))));
    }
    mags.push_back(std::abs(s));
  }
  ASSERT_EQ(sizing.thresholds.size(), 2u);
  EXPECT_DOUBLE_EQ(sizing.thresholds[0], percentile(mags, 80));
  EXPECT_DOUBLE_EQ(sizing.thresholds[1], percentile(mags, 50));
  EXPECT_EQ(sizing.quantities, ladder_quantities(2));
  EXPECT_EQ(calibrate_sizing(m, hs, 5, 50, 200).thresholds.size(), 5u);
  EXPECT_DOUBLE_EQ(calibrate_min_threshold(m, hs, 50, 200), percentile(single, 10));
}

TEST(Files, LedgerSignalsAndSummary) {
  const auto f = hflab::testing::forty_tick_fixture();
  const auto ledger = run_strategy(f.stream, f.signals, f.config);
  const auto dir = hflab::testing::scratch_dir("backtest_files");
  write_ledger_csv(dir / "ledger.csv", ledger);
  const auto back = read_ledger_csv(dir / "ledger.csv");
  expect_same_ledger(back, TradeLedger{ledger.horizons, ledger.trades, ledger.cumulative_pnl, 0, {}});
  EXPECT_EQ(back.horizons, ledger.horizons);

  write_signals_csv(dir / "signals.csv", f.signals);
  const auto sig = read_signals_csv(dir / "signals.csv");
  EXPECT_EQ(sig.horizons, f.signals.horizons);
  for (std::size_t t = 0; t < 40; ++t) {
    const double a = sig.at(t, 0), b = f.signals.at(t, 0);
    EXPECT_TRUE((std::isnan(a) && std::isnan(b)) || a == b);
  }

  write_summary_json(dir / "summary.json", ledger);
  std::ifstream in(dir / "summary.json");
  const auto j = nlohmann::json::parse(in);
  for (const char* key : {"final_pnl", "trade_count", "discarded_trades", "win_ratio", "pnl_std", "horizons",
                          "signal_pnl_correlation"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_NEAR(j["final_pnl"].get<double>(), -0.3320054, 1e-9);
  EXPECT_EQ(j["trade_count"].get<int>(), 4);
  EXPECT_EQ(j["discarded_trades"].get<int>(), 1);
  EXPECT_DOUBLE_EQ(j["win_ratio"].get<double>(), 0.25);

  write_cum_pnl_csv(dir / "cum.csv", ledger);
  EXPECT_FALSE(hflab::testing::slurp(dir / "cum.csv").empty());
}

TEST(GenerateSignals, ShapeWarmupAndNoLookahead) {
  const auto stream = hflab::testing::synthetic_stream(3, 300);
  auto spec1 = models::default_lstm(1, 10);
  spec1.lstm_layers = 1;
  auto spec3 = spec1;
  spec3.horizon = 3;
  const auto m1 = models::make_model(spec1, 1);
  const auto m3 = models::make_model(spec3, 2);
  const std::vector<const models::Model*> ms{m1.get(), m3.get()};
  const auto sig = generate_signals(ms, stream, 10);
  EXPECT_EQ(sig.horizons, (std::vector<std::size_t>{1, 3}));
  EXPECT_EQ(sig.ticks, stream.size());
  for (std::size_t t = 0; t < stream.size(); ++t) {
    EXPECT_EQ(std::isnan(sig.at(t, 0)), t < 10 - 1 + 1) << t;
    EXPECT_EQ(std::isnan(sig.at(t, 1)), t < 10 - 1 + 3) << t;
  }
  // Rewriting the tail leaves earlier signals untouched.
  auto mutated = stream;
  for (std::size_t t = 150; t < mutated.size(); ++t) mutated.snapshots[t] = hflab::testing::book_at(30000.0 + t, mutated[t].timestamp_ms);
  const auto sig2 = generate_signals(ms, mutated, 10);
  for (std::size_t t = 0; t < 150; ++t) {
    for (std::size_t j = 0; j < 2; ++j) {
      const double a = sig.at(t, j), b = sig2.at(t, j);
      EXPECT_TRUE((std::isnan(a) && std::isnan(b)) || a == b);
    }
  }
  const std::vector<const models::Model*> dup{m1.get(), m1.get()};
  EXPECT_EQ(code_of([&] { generate_signals(dup, stream, 10); }), ErrorCode::ModelHorizonMismatch);
  EXPECT_EQ(code_of([&] { generate_signals(ms, stream, 12); }), ErrorCode::ModelHorizonMismatch);
}

TEST(GenerateSignals, ConstantStreamGivesConstantSignal) {
  const auto stream = hflab::testing::stream_from_mids(std::vector<double>(60, 20000.0));
  auto spec = models::default_lstm(2, 8);
  spec.lstm_layers = 1;
  const auto m = models::make_model(spec, 4);
  const std::vector<const models::Model*> ms{m.get()};
  const auto sig = generate_signals(ms, stream, 8);
  const double first = sig.at(9, 0);
  for (std::size_t t = 9; t < 60; ++t) EXPECT_NEAR(sig.at(t, 0), first, 1e-12);
}
