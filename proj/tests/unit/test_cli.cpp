// SPDX-License-Identifier: Apache-2.0
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "backtest_fixture.hpp"
#include "hflab/backtest.hpp"
#include "hflab/metrics.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
namespace bt = hflab::backtest;
namespace ht = hflab::testing;

namespace {

int run(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(HFLAB_EXE) + " -q " + args + " > " + log.string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::size_t count_lines(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

const char* kSmallModel =
    "[data]\nlookback = 10\n"
    "[model]\nd_model = 8\nheads = 2\nhead_dim = 4\nffn_dim = 16\ndecoder_hidden = 8\n"
    "[train]\nepochs = 1\nbatch_size = 32\nlr = 0.001\n";

}  // namespace

TEST(Cli, IngestDeduplicatesAndIsIdempotent) {
  const auto dir = ht::scratch_dir("cli_ingest");
  const std::string in = std::string(HFLAB_TEST_DATA) + "/ingest10.csv";
  ASSERT_EQ(run("ingest --input " + in + " --out " + (dir / "a.csv").string() + " --stats " +
                    (dir / "s.json").string(),
                dir / "log"),
            0);
  EXPECT_EQ(count_lines(dir / "a.csv"), 8u);  // header + 7 rows
  std::ifstream js(dir / "s.json");
  const auto j = nlohmann::json::parse(js);
  EXPECT_EQ(j["rows_in"].get<int>(), 10);
  EXPECT_EQ(j["rows_out"].get<int>(), 7);
  ASSERT_EQ(run("ingest --input " + (dir / "a.csv").string() + " --out " + (dir / "b.csv").string(), dir / "log"), 0);
  EXPECT_EQ(ht::slurp(dir / "a.csv"), ht::slurp(dir / "b.csv"));
}

TEST(Cli, ExitCodes) {
  const auto dir = ht::scratch_dir("cli_codes");
  EXPECT_EQ(run("ingest --input /nonexistent.csv --out " + (dir / "x.csv").string(), dir / "log"), 2);
  std::ofstream(dir / "bad.csv") << "ts_ms,bp1\n1,2\n";
  EXPECT_EQ(run("ingest --input " + (dir / "bad.csv").string() + " --out " + (dir / "x.csv").string(), dir / "log"),
            2);
  EXPECT_EQ(run("frobnicate", dir / "log"), 4);
  EXPECT_EQ(run("synth --out " + (dir / "raw.csv").string() + " --n 400 --seed 1", dir / "log"), 0);
  ASSERT_EQ(run("--seed 1 synth --out " + (dir / "raw.csv").string() + " --n 400", dir / "log"), 0);
  ASSERT_EQ(run("ingest --input " + (dir / "raw.csv").string() + " --out " + (dir / "d.csv").string(), dir / "log"), 0);
  ASSERT_EQ(run("featurize --input " + (dir / "d.csv").string() + " --out " + (dir / "f.bin").string() +
                    " --horizon 1",
                dir / "log"),
            0);
  EXPECT_EQ(run("--seed 1 train --data " + (dir / "f.bin").string() + " --horizon 0 --out-dir " + dir.string(),
                dir / "log"),
            4);
  // No seed.
  EXPECT_EQ(run("train --data " + (dir / "f.bin").string() + " --out-dir " + dir.string(), dir / "log"), 4);
  EXPECT_EQ(run("--seed 1 evaluate --data " + (dir / "f.bin").string() + " --checkpoint /nonexistent.ckpt",
                dir / "log"),
            2);
}

TEST(Cli, TrainingIsByteReproducible) {
  const auto dir = ht::scratch_dir("cli_train");
  std::ofstream(dir / "c.ini") << kSmallModel;
  ASSERT_EQ(run("--seed 3 synth --out " + (dir / "raw.csv").string() + " --n 1500", dir / "log"), 0);
  ASSERT_EQ(run("ingest --input " + (dir / "raw.csv").string() + " --out " + (dir / "d.csv").string(), dir / "log"), 0);
  ASSERT_EQ(run("featurize --input " + (dir / "d.csv").string() + " --out " + (dir / "f.bin").string(), dir / "log"),
            0);
  for (const char* sub : {"a", "b"}) {
    ASSERT_EQ(run("--config " + (dir / "c.ini").string() + " --seed 5 train --data " + (dir / "f.bin").string() +
                      " --out-dir " + (dir / sub).string(),
                  dir / "log"),
              0)
        << ht::slurp(dir / "log");
  }
  EXPECT_EQ(ht::slurp(dir / "a" / "model.ckpt"), ht::slurp(dir / "b" / "model.ckpt"));
  EXPECT_EQ(ht::slurp(dir / "a" / "loss_curve.csv"), ht::slurp(dir / "b" / "loss_curve.csv"));
  ASSERT_EQ(run("--config " + (dir / "c.ini").string() + " evaluate --data " + (dir / "f.bin").string() +
                    " --checkpoint " + (dir / "a" / "model.ckpt").string() + " --out-dir " + dir.string(),
                dir / "log"),
            0);
  EXPECT_TRUE(fs::exists(dir / "eval_test.csv"));
}

TEST(Cli, BacktestFromSignalsMatchesOracle) {
  const auto dir = ht::scratch_dir("cli_oracle");
  const auto f = ht::forty_tick_fixture();
  hflab::lob::write_csv(dir / "s.csv", f.stream);
  bt::write_signals_csv(dir / "sig.csv", f.signals);
  std::ofstream(dir / "c.ini") << "[backtest]\ncalibration_fraction = 0\ndelay_ticks = 2\n";
  ASSERT_EQ(run("--config " + (dir / "c.ini").string() + " --seed 1 backtest --input " + (dir / "s.csv").string() +
                    " --signals-csv " + (dir / "sig.csv").string() + " --horizon 5 --out-dir " + dir.string(),
                dir / "log"),
            0)
      << ht::slurp(dir / "log");
  const auto ledger = bt::read_ledger_csv(dir / "ledger.csv");
  ASSERT_EQ(ledger.trades.size(), f.trades.size());
  for (std::size_t i = 0; i < f.trades.size(); ++i) {
    EXPECT_EQ(ledger.trades[i].decision_tick, f.trades[i].decision);
    EXPECT_NEAR(ledger.trades[i].pnl, f.trades[i].pnl, 1e-9);
    EXPECT_NEAR(ledger.cumulative_pnl[i], f.cumulative[i], 1e-9);
  }
  std::ifstream js(dir / "summary.json");
  const auto j = nlohmann::json::parse(js);
  EXPECT_EQ(j["discarded_trades"].get<int>(), 1);
  EXPECT_NEAR(j["final_pnl"].get<double>(), -0.3320054, 1e-9);
  EXPECT_TRUE(j["signal_pnl_correlation"].contains("5"));
}

TEST(Cli, StrategiesAndReport) {
  const auto dir = ht::scratch_dir("cli_strategies");
  std::mt19937_64 rng(21);
  const auto stream = ht::random_walk_stream(rng, 3000);
  const auto sig = ht::random_signal_matrix(rng, 3000);
  hflab::lob::write_csv(dir / "s.csv", stream);
  bt::write_signals_csv(dir / "sig.csv", sig);
  std::size_t trades[4] = {};
  for (int k : {1, 3}) {
    const auto out = dir / ("s" + std::to_string(k));
    ASSERT_EQ(run("--seed 1 backtest --input " + (dir / "s.csv").string() + " --signals-csv " +
                      (dir / "sig.csv").string() + " --horizon 25 --strategy " + std::to_string(k) + " --out-dir " +
                      out.string(),
                  dir / "log"),
              0)
        << ht::slurp(dir / "log");
    std::ifstream js(out / "summary.json");
    const auto j = nlohmann::json::parse(js);
    for (const char* key : {"final_pnl", "trade_count", "discarded_trades", "win_ratio", "pnl_std", "horizons",
                            "signal_pnl_correlation"}) {
      EXPECT_TRUE(j.contains(key)) << key;
    }
    trades[k] = j["trade_count"].get<std::size_t>();
  }
  EXPECT_GT(trades[1], 10u);
  EXPECT_LE(trades[3], trades[1]);

  // An even signal count is a configuration error.
  EXPECT_EQ(run("--seed 1 backtest --input " + (dir / "s.csv").string() + " --signals-csv " +
                    (dir / "sig.csv").string() + " --horizon 25 --signals 4 --out-dir " + dir.string(),
                dir / "log"),
            4);

  ASSERT_EQ(run("report " + (dir / "s1" / "ledger.csv").string() + " --out-dir " + (dir / "r1").string(), dir / "log"),
            0);
  EXPECT_TRUE(fs::exists(dir / "r1" / "comparison.csv"));
  ASSERT_EQ(run("report one=" + (dir / "s1" / "ledger.csv").string() + " three=" +
                    (dir / "s3" / "ledger.csv").string() + " --out-dir " + (dir / "r2").string(),
                dir / "log"),
            0);
  std::ifstream cmp(dir / "r2" / "comparison.csv");
  std::string header;
  std::getline(cmp, header);
  EXPECT_EQ(header, "metric,one,three");

  // The correlation table is recomputable from the ledger alone.
  const auto ledger = bt::read_ledger_csv(dir / "s3" / "ledger.csv");
  std::vector<double> pnl, s0;
  for (const auto& t : ledger.trades) {
    pnl.push_back(t.pnl);
    s0.push_back(t.signals[0]);
  }
  const double expect = hflab::metrics::pearson(pnl, s0);
  std::ifstream corr(dir / "r2" / "correlations_three.csv");
  std::string line;
  std::getline(corr, line);  // header
  std::getline(corr, line);  // pnl row
  std::stringstream ss(line);
  std::string cell;
  std::getline(ss, cell, ',');  // row name
  std::getline(ss, cell, ',');  // pnl,pnl
  std::getline(ss, cell, ',');  // pnl,signal_h23
  EXPECT_NEAR(std::stod(cell), expect, 1e-9);
}
