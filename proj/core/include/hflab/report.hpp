// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hflab/backtest.hpp"

namespace hflab::report {

struct LedgerStats {
  std::string label;
  double final_pnl = 0.0;
  std::size_t trades = 0;
  double win_ratio = 0.0;
  double mean_pnl = 0.0;
  double pnl_std = 0.0;  // population
};

LedgerStats ledger_stats(const std::string& label, const backtest::TradeLedger& ledger);

struct LabelledLedger {
  std::string label;
  backtest::TradeLedger ledger;
};

/// Writes into `dir`: comparison.csv (one column per ledger), and per ledger
/// correlations_<label>.csv, win_ratio_<label>.csv and, when there are enough
/// trades, magnitude_profile_<label>.csv; plus report.json with everything.
/// Returns the comparison rows.
std::vector<LedgerStats> write_report(const std::filesystem::path& dir, const std::vector<LabelledLedger>& ledgers,
                                      std::size_t bins = 5, std::size_t batch = 200);

}  // namespace hflab::report
