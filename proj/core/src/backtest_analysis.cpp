// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hflab/backtest.hpp"
#include "hflab/error.hpp"
#include "hflab/metrics.hpp"
#include "kv.hpp"

namespace hflab::backtest {
namespace {

std::vector<std::size_t> by_magnitude(const TradeLedger& ledger) {
  std::vector<std::size_t> order(ledger.trades.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return ledger.trades[a].magnitude < ledger.trades[b].magnitude;
  });
  return order;
}

std::string cell(double v) { return std::isnan(v) ? std::string("nan") : kv::format_double(v); }

double parse_cell(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) raise(ErrorCode::MalformedRecord, "bad number '" + s + "'");
  return v;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(kv::trim(item));
  return out;
}

std::size_t horizon_of(const std::string& column) {
  constexpr std::string_view prefix = "signal_h";
  if (column.rfind(prefix, 0) != 0) raise(ErrorCode::MalformedRecord, "unexpected column '" + column + "'");
  return kv::to_uint(column, column.substr(prefix.size()));
}

}  // namespace

CorrelationTable correlation_table(const TradeLedger& ledger) {
  if (ledger.trades.size() < 2) raise(ErrorCode::TooFewTrades, "correlations need at least 2 trades");
  const std::size_t h = ledger.horizons.size();
  std::vector<std::vector<double>> cols(h + 1);
  CorrelationTable table;
  table.names.push_back("pnl");
  for (auto hz : ledger.horizons) table.names.push_back("signal_h" + std::to_string(hz));
  for (const auto& t : ledger.trades) {
    cols[0].push_back(t.pnl);
    for (std::size_t j = 0; j < h; ++j) cols[j + 1].push_back(t.signals.at(j));
  }
  const std::size_t n = h + 1;
  table.values.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double r = metrics::pearson(cols[i], cols[j]);
      table.values[i * n + j] = i == j ? 1.0 : r;
      table.values[j * n + i] = i == j ? 1.0 : r;
    }
  }
  return table;
}

std::vector<double> magnitude_pnl_profile(const TradeLedger& ledger, std::size_t batch) {
  if (batch < 2) raise(ErrorCode::InvalidConfig, "batch must hold at least 2 trades");
  if (ledger.trades.size() < batch) {
    raise(ErrorCode::TooFewTrades, std::to_string(ledger.trades.size()) + " trades for batches of " +
                                       std::to_string(batch));
  }
  const auto order = by_magnitude(ledger);
  std::vector<double> out;
  std::vector<double> mag(batch), pnl(batch);
  for (std::size_t start = 0; start + batch <= order.size(); start += batch) {
    for (std::size_t i = 0; i < batch; ++i) {
      mag[i] = ledger.trades[order[start + i]].magnitude;
      pnl[i] = ledger.trades[order[start + i]].pnl;
    }
    out.push_back(metrics::pearson(mag, pnl));
  }
  return out;
}

std::vector<WinBin> winning_ratio_by_magnitude(const TradeLedger& ledger, std::size_t bins) {
  if (bins == 0) raise(ErrorCode::InvalidConfig, "need at least one bin");
  if (ledger.trades.empty()) raise(ErrorCode::TooFewTrades, "empty ledger");
  const auto order = by_magnitude(ledger);
  const std::size_t n = order.size();
  std::vector<WinBin> out(bins);
  for (auto& b : out) {
    b.lo = std::numeric_limits<double>::infinity();
    b.hi = -std::numeric_limits<double>::infinity();
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Trade& t = ledger.trades[order[i]];
    WinBin& b = out[i * bins / n];
    b.lo = std::min(b.lo, t.magnitude);
    b.hi = std::max(b.hi, t.magnitude);
    ++b.total;
    if (t.pnl > 0.0) ++b.wins;
  }
  for (auto& b : out) {
    if (b.total == 0) {
      b.lo = b.hi = std::numeric_limits<double>::quiet_NaN();
      b.ratio = std::numeric_limits<double>::quiet_NaN();
    } else {
      b.ratio = static_cast<double>(b.wins) / static_cast<double>(b.total);
    }
  }
  return out;
}

std::vector<SweepEntry> signal_count_sweep(const lob::SnapshotStream& stream, const SignalMatrix& signals,
                                           const BacktestConfig& base, std::size_t main_horizon,
                                           std::span<const std::size_t> counts) {
  std::vector<SweepEntry> out;
  for (auto k : counts) {
    SweepEntry e;
    e.count = k;
    e.horizons = centred_horizons(k, main_horizon);
    for (auto h : e.horizons) signals.column(h);
    BacktestConfig cfg = base;
    cfg.main_horizon = main_horizon;
    cfg.signal_horizons = e.horizons;
    e.ledger = run_strategy(stream, signals, cfg);
    out.push_back(std::move(e));
  }
  return out;
}

// ---------------------------------------------------------------- files

void write_ledger_csv(const std::filesystem::path& path, const TradeLedger& ledger) {
  std::ofstream out(path);
  if (!out) raise(ErrorCode::Io, "cannot write " + path.string());
  out << "decision_tick,open_tick,close_tick,side,qty,open_price,close_price";
  for (auto h : ledger.horizons) out << ",signal_h" << h;
  out << ",magnitude,pnl\n";
  for (const auto& t : ledger.trades) {
    out << t.decision_tick << ',' << t.open_tick << ',' << t.close_tick << ','
        << (t.side == Side::long_side ? "long" : "short") << ',' << cell(t.qty) << ',' << cell(t.open_price) << ','
        << cell(t.close_price);
    for (double s : t.signals) out << ',' << cell(s);
    out << ',' << cell(t.magnitude) << ',' << cell(t.pnl) << '\n';
  }
  if (!out) raise(ErrorCode::Io, "write failed for " + path.string());
}

TradeLedger read_ledger_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::Io, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) raise(ErrorCode::MalformedRecord, path.string() + " is empty");
  const auto header = split(line);
  if (header.size() < 9 || header[0] != "decision_tick" || header[header.size() - 1] != "pnl") {
    raise(ErrorCode::MalformedRecord, path.string() + " is not a ledger");
  }
  TradeLedger ledger;
  for (std::size_t c = 7; c + 2 < header.size(); ++c) ledger.horizons.push_back(horizon_of(header[c]));
  double running = 0.0;
  while (std::getline(in, line)) {
    if (kv::trim(line).empty()) continue;
    const auto f = split(line);
    if (f.size() != header.size()) raise(ErrorCode::MalformedRecord, "ledger row has " + std::to_string(f.size()) +
                                                                         " fields");
    Trade t;
    t.decision_tick = kv::to_uint("decision_tick", f[0]);
    t.open_tick = kv::to_uint("open_tick", f[1]);
    t.close_tick = kv::to_uint("close_tick", f[2]);
    if (f[3] == "long") t.side = Side::long_side;
    else if (f[3] == "short") t.side = Side::short_side;
    else raise(ErrorCode::MalformedRecord, "unknown side '" + f[3] + "'");
    t.qty = parse_cell(f[4]);
    t.open_price = parse_cell(f[5]);
    t.close_price = parse_cell(f[6]);
    for (std::size_t c = 7; c + 2 < f.size(); ++c) t.signals.push_back(parse_cell(f[c]));
    t.magnitude = parse_cell(f[f.size() - 2]);
    t.pnl = parse_cell(f[f.size() - 1]);
    running += t.pnl;
    ledger.cumulative_pnl.push_back(running);
    ledger.trades.push_back(std::move(t));
  }
  ledger.config.signal_horizons = ledger.horizons;
  return ledger;
}

void write_cum_pnl_csv(const std::filesystem::path& path, const TradeLedger& ledger) {
  std::ofstream out(path);
  if (!out) raise(ErrorCode::Io, "cannot write " + path.string());
  out << "tick,cum_pnl\n";
  for (std::size_t i = 0; i < ledger.trades.size(); ++i) {
    out << ledger.trades[i].close_tick << ',' << cell(ledger.cumulative_pnl[i]) << '\n';
  }
}

void write_summary_json(const std::filesystem::path& path, const TradeLedger& ledger) {
  const std::size_t n = ledger.trades.size();
  std::size_t wins = 0;
  double mean = 0.0;
  for (const auto& t : ledger.trades) {
    if (t.pnl > 0.0) ++wins;
    mean += t.pnl;
  }
  mean = n ? mean / static_cast<double>(n) : 0.0;
  double var = 0.0;
  for (const auto& t : ledger.trades) var += (t.pnl - mean) * (t.pnl - mean);
  nlohmann::json j;
  j["final_pnl"] = ledger.final_pnl();
  j["trade_count"] = n;
  j["discarded_trades"] = ledger.discarded;
  j["win_ratio"] = n ? static_cast<double>(wins) / static_cast<double>(n) : 0.0;
  j["pnl_std"] = n ? std::sqrt(var / static_cast<double>(n)) : 0.0;
  j["horizons"] = ledger.horizons;
  nlohmann::json corr = nlohmann::json::object();
  std::vector<double> pnl;
  for (const auto& t : ledger.trades) pnl.push_back(t.pnl);
  for (std::size_t k = 0; k < ledger.horizons.size(); ++k) {
    std::vector<double> sig;
    for (const auto& t : ledger.trades) sig.push_back(t.signals.at(k));
    nlohmann::json value = nullptr;
    try {
      value = metrics::pearson(pnl, sig);
    } catch (const Error&) {
      // fewer than two trades or a constant column
    }
    corr[std::to_string(ledger.horizons[k])] = value;
  }
  j["signal_pnl_correlation"] = corr;
  std::ofstream out(path);
  if (!out) raise(ErrorCode::Io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_signals_csv(const std::filesystem::path& path, const SignalMatrix& signals) {
  std::ofstream out(path);
  if (!out) raise(ErrorCode::Io, "cannot write " + path.string());
  out << "tick";
  for (auto h : signals.horizons) out << ",signal_h" << h;
  out << '\n';
  for (std::size_t t = 0; t < signals.ticks; ++t) {
    out << t;
    for (std::size_t j = 0; j < signals.horizons.size(); ++j) out << ',' << cell(signals.at(t, j));
    out << '\n';
  }
}

SignalMatrix read_signals_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::Io, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) raise(ErrorCode::MalformedRecord, path.string() + " is empty");
  const auto header = split(line);
  if (header.empty() || header[0] != "tick") raise(ErrorCode::MalformedRecord, path.string() + " lacks a tick column");
  std::vector<std::size_t> horizons;
  for (std::size_t c = 1; c < header.size(); ++c) horizons.push_back(horizon_of(header[c]));
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (kv::trim(line).empty()) continue;
    const auto f = split(line);
    if (f.size() != header.size()) raise(ErrorCode::MalformedRecord, "signal row with wrong field count");
    if (kv::to_uint("tick", f[0]) != rows.size()) raise(ErrorCode::MalformedRecord, "signal ticks must be 0, 1, 2, ...");
    std::vector<double> r;
    for (std::size_t c = 1; c < f.size(); ++c) r.push_back(parse_cell(f[c]));
    rows.push_back(std::move(r));
  }
  SignalMatrix m = make_signal_matrix(horizons, rows.size());
  for (std::size_t t = 0; t < rows.size(); ++t) {
    for (std::size_t j = 0; j < horizons.size(); ++j) m.at(t, j) = rows[t][j];
  }
  return m;
}

}  // namespace hflab::backtest
