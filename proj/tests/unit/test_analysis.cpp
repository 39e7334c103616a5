// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <fstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "backtest_fixture.hpp"
#include "hflab/backtest.hpp"
#include "hflab/report.hpp"
#include "test_util.hpp"

using namespace hflab::backtest;
using hflab::ErrorCode;
using hflab::testing::code_of;
namespace ht = hflab::testing;

namespace {

// Ledger with hand-placed trades; pnl and signals are given directly.
TradeLedger synthetic_ledger(std::vector<std::size_t> horizons, const std::vector<std::vector<double>>& signals,
                             const std::vector<double>& pnl) {
  TradeLedger l;
  l.horizons = std::move(horizons);
  double run = 0.0;
  for (std::size_t i = 0; i < pnl.size(); ++i) {
    Trade t;
    t.decision_tick = 10 * i;
    t.open_tick = 10 * i + 1;
    t.close_tick = 10 * i + 5;
    t.qty = 0.1;
    t.open_price = t.close_price = 100.0;
    t.signals = signals[i];
    double s = 0.0;
    for (double v : t.signals) s += v;
    t.magnitude = std::abs(s);
    t.pnl = pnl[i];
    run += t.pnl;
    l.trades.push_back(t);
    l.cumulative_pnl.push_back(run);
  }
  return l;
}

}  // namespace

TEST(Correlations, DuplicatedColumnAndSymmetry) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<std::vector<double>> sig;
  std::vector<double> pnl;
  for (int i = 0; i < 300; ++i) {
    const double a = z(rng);
    sig.push_back({a, a, z(rng)});
    pnl.push_back(z(rng));
  }
  const auto t = correlation_table(synthetic_ledger({1, 2, 3}, sig, pnl));
  ASSERT_EQ(t.names, (std::vector<std::string>{"pnl", "signal_h1", "signal_h2", "signal_h3"}));
  EXPECT_NEAR(t.at(1, 2), 1.0, 1e-12);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(t.at(i, i), 1.0);
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(t.at(i, j), t.at(j, i));
  }
  // Independent draws: correlations near zero at n = 300.
  EXPECT_LT(std::abs(t.at(0, 3)), 0.2);
  EXPECT_EQ(code_of([&] { correlation_table(synthetic_ledger({1}, {{0.1}}, {1.0})); }), ErrorCode::TooFewTrades);
}

TEST(MagnitudeProfile, BatchesAndPerfectRelation) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::vector<double>> sig;
  std::vector<double> pnl;
  for (int i = 0; i < 450; ++i) {
    const double m = u(rng);
    sig.push_back({m});
    pnl.push_back(3.0 * m - 1.0);
  }
  const auto prof = magnitude_pnl_profile(synthetic_ledger({7}, sig, pnl), 200);
  ASSERT_EQ(prof.size(), 2u);
  for (double r : prof) EXPECT_NEAR(r, 1.0, 1e-12);
  EXPECT_EQ(code_of([&] { magnitude_pnl_profile(synthetic_ledger({7}, sig, pnl), 500); }), ErrorCode::TooFewTrades);
  EXPECT_EQ(code_of([&] { magnitude_pnl_profile(synthetic_ledger({7}, sig, pnl), 1); }), ErrorCode::InvalidConfig);
}

TEST(WinRatio, EqualCountBins) {
  std::vector<std::vector<double>> sig;
  std::vector<double> pnl;
  // Magnitudes 1..10; the upper half wins.
  for (int i = 10; i >= 1; --i) {
    sig.push_back({static_cast<double>(i)});
    pnl.push_back(i > 5 ? 1.0 : -1.0);
  }
  const auto bins = winning_ratio_by_magnitude(synthetic_ledger({1}, sig, pnl), 2);
  ASSERT_EQ(bins.size(), 2u);
  EXPECT_EQ(bins[0].total, 5u);
  EXPECT_EQ(bins[0].wins, 0u);
  EXPECT_EQ(bins[0].lo, 1.0);
  EXPECT_EQ(bins[0].hi, 5.0);
  EXPECT_EQ(bins[1].ratio, 1.0);
  const auto three = winning_ratio_by_magnitude(synthetic_ledger({1}, sig, pnl), 3);
  std::size_t total = 0;
  for (const auto& b : three) total += b.total;
  EXPECT_EQ(total, 10u);
  EXPECT_EQ(code_of([&] { winning_ratio_by_magnitude(TradeLedger{}, 2); }), ErrorCode::TooFewTrades);
}

TEST(SignalSweep, TradeCountNeverGrowsWithK) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto stream = ht::random_walk_stream(rng, 500);
    const auto sig = ht::random_signal_matrix(rng, 500);
    const std::vector<std::size_t> ks{1, 3, 5, 7};
    const auto sweep = signal_count_sweep(stream, sig, BacktestConfig{}, 25, ks);
    ASSERT_EQ(sweep.size(), 4u);
    for (std::size_t i = 0; i < sweep.size(); ++i) {
      EXPECT_EQ(sweep[i].horizons, centred_horizons(ks[i], 25));
      // Entry ticks at larger k are a subset, and the greedy scan over
      // equal-length holds picks a maximum set of entries.
      if (i > 0) EXPECT_LE(sweep[i].ledger.trades.size(), sweep[i - 1].ledger.trades.size()) << trial;
    }
  }
  std::mt19937_64 r2(1);
  const auto stream = ht::random_walk_stream(r2, 100);
  const auto sig = ht::random_signal_matrix(r2, 100);
  const std::vector<std::size_t> too_wide{13};
  EXPECT_EQ(code_of([&] { signal_count_sweep(stream, sig, BacktestConfig{}, 25, too_wide); }), ErrorCode::MissingModel);
}

TEST(Report, StatsAndFiles) {
  const auto f = ht::forty_tick_fixture();
  const auto ledger = run_strategy(f.stream, f.signals, f.config);
  const auto st = hflab::report::ledger_stats("a", ledger);
  EXPECT_EQ(st.trades, 4u);
  EXPECT_NEAR(st.final_pnl, -0.3320054, 1e-9);
  EXPECT_DOUBLE_EQ(st.win_ratio, 0.25);
  EXPECT_NEAR(st.mean_pnl, -0.3320054 / 4.0, 1e-9);

  const auto dir = ht::scratch_dir("report");
  auto one = hflab::report::write_report(dir / "one", {{"s1", ledger}});
  EXPECT_EQ(one.size(), 1u);
  EXPECT_TRUE(std::filesystem::exists(dir / "one" / "comparison.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "one" / "report.json"));

  auto cfg = f.config;
  cfg.trade_from_tick = 8;
  const auto other = run_strategy(f.stream, f.signals, cfg);
  const auto two = hflab::report::write_report(dir / "two", {{"s1", ledger}, {"s2", other}});
  ASSERT_EQ(two.size(), 2u);
  std::ifstream in(dir / "two" / "comparison.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "metric,s1,s2");
  std::ifstream js(dir / "two" / "report.json");
  EXPECT_TRUE(nlohmann::json::parse(js).is_array());
}
