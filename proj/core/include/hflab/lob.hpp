// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace hflab::lob {

inline constexpr std::size_t kLevels = 10;
/// timestamp + 10 x (price, qty) bids + 10 x (price, qty) asks
inline constexpr std::size_t kFieldsPerRecord = 1 + 4 * kLevels;

struct Level {
  double price = 0.0;
  double qty = 0.0;

  friend bool operator==(const Level&, const Level&) = default;
};

/// One level-2 book observation. Bids are ordered best (highest) first and
/// asks best (lowest) first.
struct LobSnapshot {
  std::int64_t timestamp_ms = 0;
  std::array<Level, kLevels> bids{};
  std::array<Level, kLevels> asks{};

  double best_bid() const noexcept { return bids[0].price; }
  double best_ask() const noexcept { return asks[0].price; }
  double spread() const noexcept { return asks[0].price - bids[0].price; }

  friend bool operator==(const LobSnapshot&, const LobSnapshot&) = default;
};

/// Throws MalformedRecord / CrossedBook / UnsortedLevels / EmptySide.
void validate(const LobSnapshot& snapshot);

struct SnapshotStream {
  std::string source_id;
  std::vector<LobSnapshot> snapshots;

  std::size_t size() const noexcept { return snapshots.size(); }
  bool empty() const noexcept { return snapshots.empty(); }
  const LobSnapshot& operator[](std::size_t i) const { return snapshots[i]; }
};

/// Parses one `ts_ms,bp1,bq1,...,bp10,bq10,ap1,aq1,...,ap10,aq10` line and
/// validates the book invariants.
LobSnapshot parse_snapshot(std::string_view record);

/// Inverse of parse_snapshot; numbers are written in shortest round-trip form.
std::string serialize_snapshot(const LobSnapshot& snapshot);

std::string csv_header();

/// Reads a CSV stream (header line first). Rows whose timestamp is earlier
/// than the previous row are rejected with OutOfOrderTimestamp.
SnapshotStream read_csv(std::istream& in, std::string source_id);
SnapshotStream read_csv(const std::filesystem::path& path);

void write_csv(std::ostream& out, const SnapshotStream& stream);
void write_csv(const std::filesystem::path& path, const SnapshotStream& stream);

using MidpriceFn = std::function<double(const LobSnapshot&)>;

/// Midprices are compared after rounding to this many fractional digits.
inline constexpr int kMidpriceDigits = 8;
std::int64_t midprice_key(double midprice) noexcept;

/// Keeps the first snapshot and every later snapshot whose midprice differs
/// from the previously kept one. Sequential by construction.
SnapshotStream dedup_stream(const SnapshotStream& stream, const MidpriceFn& midprice);

/// Inter-arrival statistics; gaps are reported, never repaired.
struct GapStats {
  static constexpr std::array<std::int64_t, 4> kEdgesMs{100, 200, 500, 1000};

  std::size_t count = 0;
  std::int64_t min_ms = 0;
  std::int64_t max_ms = 0;
  double mean_ms = 0.0;
  /// histogram[i] counts gaps <= kEdgesMs[i] (and > the previous edge);
  /// the last bucket holds gaps above 1000 ms.
  std::array<std::size_t, kEdgesMs.size() + 1> histogram{};
};

GapStats gap_stats(const SnapshotStream& stream);

/// Parameters of the synthetic book generator.
///
/// The latent midprice follows a geometric random walk. A bounded book
/// imbalance state `s_t` (AR(1), persistence `imbalance_phi`) skews the
/// level-1 quantities as `d0 (1 + s_t)` on the bid and `d0 (1 - s_t)` on the
/// ask, and, when `signal_snr > 0`, also drives the next log-return:
///
///   log m_{t+1} = log m_t + drift + a s_t + vol e_t,   a = sqrt(snr) vol / sd(s)
///
/// so the planted predictable component has variance `snr * vol^2`.
struct Regime {
  double initial_mid = 20000.0;
  double drift = 0.0;
  double vol = 1e-4;
  double spread = 0.5;
  double level_gap = 0.5;
  std::array<double, kLevels> depth_profile{1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0, 5.5};
  double imbalance_phi = 0.7;
  double imbalance_sd = 0.3;
  double signal_snr = 0.0;
  std::int64_t start_timestamp_ms = 1656633600000;
  std::int64_t step_ms = 100;
};

/// Deterministic in (seed, n, regime). Throws InvalidRegime.
SnapshotStream synth_lob_stream(std::uint64_t seed, std::size_t n, const Regime& regime);

}  // namespace hflab::lob
