// SPDX-License-Identifier: Apache-2.0
#include "hflab/report.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "hflab/error.hpp"
#include "kv.hpp"

namespace hflab::report {
namespace {

std::ofstream open(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) raise(ErrorCode::Io, "cannot write " + path.string());
  return out;
}

std::string num(double v) { return std::isfinite(v) ? kv::format_double(v) : std::string("nan"); }

nlohmann::json json_num(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

LedgerStats ledger_stats(const std::string& label, const backtest::TradeLedger& ledger) {
  LedgerStats s;
  s.label = label;
  s.trades = ledger.trades.size();
  s.final_pnl = ledger.final_pnl();
  if (s.trades == 0) return s;
  std::size_t wins = 0;
  for (const auto& t : ledger.trades) {
    s.mean_pnl += t.pnl;
    if (t.pnl > 0.0) ++wins;
  }
  const double n = static_cast<double>(s.trades);
  s.mean_pnl /= n;
  double var = 0.0;
  for (const auto& t : ledger.trades) var += (t.pnl - s.mean_pnl) * (t.pnl - s.mean_pnl);
  s.pnl_std = std::sqrt(var / n);
  s.win_ratio = static_cast<double>(wins) / n;
  return s;
}

std::vector<LedgerStats> write_report(const std::filesystem::path& dir, const std::vector<LabelledLedger>& ledgers,
                                      std::size_t bins, std::size_t batch) {
  if (ledgers.empty()) raise(ErrorCode::InvalidConfig, "report needs at least one ledger");
  std::filesystem::create_directories(dir);
  std::vector<LedgerStats> stats;
  for (const auto& l : ledgers) stats.push_back(ledger_stats(l.label, l.ledger));

  {
    auto out = open(dir / "comparison.csv");
    out << "metric";
    for (const auto& s : stats) out << ',' << s.label;
    out << "\nfinal_pnl";
    for (const auto& s : stats) out << ',' << num(s.final_pnl);
    out << "\ntrade_count";
    for (const auto& s : stats) out << ',' << s.trades;
    out << "\nwin_ratio";
    for (const auto& s : stats) out << ',' << num(s.win_ratio);
    out << "\nmean_pnl";
    for (const auto& s : stats) out << ',' << num(s.mean_pnl);
    out << "\npnl_std";
    for (const auto& s : stats) out << ',' << num(s.pnl_std);
    out << '\n';
  }

  nlohmann::json doc = nlohmann::json::array();
  for (std::size_t i = 0; i < ledgers.size(); ++i) {
    const auto& [label, ledger] = ledgers[i];
    nlohmann::json entry = {{"label", label},
                            {"final_pnl", json_num(stats[i].final_pnl)},
                            {"trade_count", stats[i].trades},
                            {"win_ratio", json_num(stats[i].win_ratio)},
                            {"mean_pnl", json_num(stats[i].mean_pnl)},
                            {"pnl_std", json_num(stats[i].pnl_std)}};
    try {
      const auto table = backtest::correlation_table(ledger);
      auto out = open(dir / ("correlations_" + label + ".csv"));
      out << "name";
      for (const auto& n : table.names) out << ',' << n;
      out << '\n';
      nlohmann::json rows = nlohmann::json::object();
      for (std::size_t r = 0; r < table.names.size(); ++r) {
        out << table.names[r];
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t c = 0; c < table.names.size(); ++c) {
          out << ',' << num(table.at(r, c));
          row.push_back(table.at(r, c));
        }
        out << '\n';
        rows[table.names[r]] = row;
      }
      entry["correlations"] = rows;
    } catch (const Error& e) {
      entry["correlations_error"] = e.what();
    }
    if (!ledger.trades.empty()) {
      const auto win = backtest::winning_ratio_by_magnitude(ledger, bins);
      auto out = open(dir / ("win_ratio_" + label + ".csv"));
      out << "bin,lo,hi,wins,total,ratio\n";
      nlohmann::json arr = nlohmann::json::array();
      for (std::size_t b = 0; b < win.size(); ++b) {
        out << b << ',' << num(win[b].lo) << ',' << num(win[b].hi) << ',' << win[b].wins << ',' << win[b].total
            << ',' << num(win[b].ratio) << '\n';
        arr.push_back({{"lo", json_num(win[b].lo)},
                       {"hi", json_num(win[b].hi)},
                       {"wins", win[b].wins},
                       {"total", win[b].total},
                       {"ratio", json_num(win[b].ratio)}});
      }
      entry["win_ratio_by_magnitude"] = arr;
    }
    if (ledger.trades.size() >= batch) {
      try {
        const auto profile = backtest::magnitude_pnl_profile(ledger, batch);
        auto out = open(dir / ("magnitude_profile_" + label + ".csv"));
        out << "batch,correlation\n";
        for (std::size_t b = 0; b < profile.size(); ++b) out << b << ',' << num(profile[b]) << '\n';
        entry["magnitude_pnl_profile"] = profile;
      } catch (const Error& e) {
        entry["magnitude_pnl_profile_error"] = e.what();
      }
    }
    doc.push_back(entry);
  }
  auto out = open(dir / "report.json");
  out << doc.dump(2) << '\n';
  return stats;
}

}  // namespace hflab::report
