// SPDX-License-Identifier: Apache-2.0
#include "hflab/lob.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

#include "hflab/error.hpp"

namespace hflab::lob {
namespace {

template <typename T>
bool parse_number(std::string_view text, T& out) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) {
    text.remove_suffix(1);
  }
  if (text.empty()) return false;
  const char* first = text.data();
  if (*first == '+') ++first;
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc{} && ptr == last;
}

void append_number(std::string& out, double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  out.append(buf, ptr);
}

bool side_empty(const std::array<Level, kLevels>& side) {
  return std::all_of(side.begin(), side.end(), [](const Level& l) { return l.qty == 0.0; });
}

}  // namespace

void validate(const LobSnapshot& s) {
  for (std::size_t l = 0; l < kLevels; ++l) {
    for (const Level* lv : {&s.bids[l], &s.asks[l]}) {
      if (!std::isfinite(lv->price) || !std::isfinite(lv->qty) || lv->price <= 0.0 || lv->qty < 0.0) {
        raise(ErrorCode::MalformedRecord,
              "level " + std::to_string(l + 1) + " needs price > 0 and qty >= 0");
      }
    }
  }
  if (s.bids[0].price >= s.asks[0].price) {
    raise(ErrorCode::CrossedBook, "best bid " + std::to_string(s.bids[0].price) +
                                      " >= best ask " + std::to_string(s.asks[0].price));
  }
  for (std::size_t l = 1; l < kLevels; ++l) {
    if (!(s.bids[l].price < s.bids[l - 1].price)) {
      raise(ErrorCode::UnsortedLevels, "bid prices must strictly decrease at level " + std::to_string(l + 1));
    }
    if (!(s.asks[l].price > s.asks[l - 1].price)) {
      raise(ErrorCode::UnsortedLevels, "ask prices must strictly increase at level " + std::to_string(l + 1));
    }
  }
  if (side_empty(s.bids) || side_empty(s.asks)) {
    raise(ErrorCode::EmptySide, "one side of the book has zero total quantity");
  }
}

LobSnapshot parse_snapshot(std::string_view record) {
  while (!record.empty() && (record.back() == '\r' || record.back() == '\n')) record.remove_suffix(1);

  std::array<std::string_view, kFieldsPerRecord> fields;
  std::size_t count = 0;
  std::size_t start = 0;
  while (true) {
    const auto comma = record.find(',', start);
    const auto piece = record.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    if (count < kFieldsPerRecord) fields[count] = piece;
    ++count;
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (count != kFieldsPerRecord) {
    raise(ErrorCode::MalformedRecord, "expected " + std::to_string(kFieldsPerRecord) + " fields, got " +
                                          std::to_string(count));
  }

  LobSnapshot s;
  if (!parse_number(fields[0], s.timestamp_ms)) {
    raise(ErrorCode::MalformedRecord, "bad timestamp '" + std::string(fields[0]) + "'");
  }
  auto read_side = [&](std::size_t offset, std::array<Level, kLevels>& side) {
    for (std::size_t l = 0; l < kLevels; ++l) {
      const auto& pf = fields[offset + 2 * l];
      const auto& qf = fields[offset + 2 * l + 1];
      if (!parse_number(pf, side[l].price) || !parse_number(qf, side[l].qty)) {
        raise(ErrorCode::MalformedRecord, "non-numeric field near column " + std::to_string(offset + 2 * l));
      }
    }
  };
  read_side(1, s.bids);
  read_side(1 + 2 * kLevels, s.asks);
  validate(s);
  return s;
}

std::string serialize_snapshot(const LobSnapshot& s) {
  std::string out;
  out.reserve(512);
  out += std::to_string(s.timestamp_ms);
  for (const auto* side : {&s.bids, &s.asks}) {
    for (const Level& l : *side) {
      out += ',';
      append_number(out, l.price);
      out += ',';
      append_number(out, l.qty);
    }
  }
  return out;
}

std::string csv_header() {
  std::string h = "ts_ms";
  for (const char* side : {"b", "a"}) {
    for (std::size_t l = 1; l <= kLevels; ++l) {
      h += ",";
      h += side;
      h += "p" + std::to_string(l) + ",";
      h += side;
      h += "q" + std::to_string(l);
    }
  }
  return h;
}

SnapshotStream read_csv(std::istream& in, std::string source_id) {
  SnapshotStream stream;
  stream.source_id = std::move(source_id);
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    if (!header_seen) {
      header_seen = true;
      if (line.rfind("ts_ms", 0) == 0) continue;
    }
    LobSnapshot s;
    try {
      s = parse_snapshot(line);
    } catch (const Error& e) {
      throw Error(e.code(), "line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!stream.snapshots.empty() && s.timestamp_ms < stream.snapshots.back().timestamp_ms) {
      raise(ErrorCode::OutOfOrderTimestamp, "line " + std::to_string(line_no) + ": timestamp " +
                                                std::to_string(s.timestamp_ms) + " precedes " +
                                                std::to_string(stream.snapshots.back().timestamp_ms));
    }
    stream.snapshots.push_back(s);
  }
  return stream;
}

SnapshotStream read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::Io, "cannot open " + path.string());
  return read_csv(in, path.stem().string());
}

void write_csv(std::ostream& out, const SnapshotStream& stream) {
  out << csv_header() << '\n';
  for (const auto& s : stream.snapshots) out << serialize_snapshot(s) << '\n';
}

void write_csv(const std::filesystem::path& path, const SnapshotStream& stream) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorCode::Io, "cannot write " + path.string());
  write_csv(out, stream);
  if (!out) raise(ErrorCode::Io, "write failed for " + path.string());
}

std::int64_t midprice_key(double midprice) noexcept {
  return std::llround(midprice * 1e8);
}

SnapshotStream dedup_stream(const SnapshotStream& stream, const MidpriceFn& midprice) {
  SnapshotStream out;
  out.source_id = stream.source_id;
  bool have_last = false;
  std::int64_t last_key = 0;
  for (const auto& s : stream.snapshots) {
    const auto key = midprice_key(midprice(s));
    if (!have_last || key != last_key) {
      out.snapshots.push_back(s);
      last_key = key;
      have_last = true;
    }
  }
  return out;
}

GapStats gap_stats(const SnapshotStream& stream) {
  GapStats g;
  if (stream.size() < 2) return g;
  double total = 0.0;
  g.min_ms = std::numeric_limits<std::int64_t>::max();
  for (std::size_t i = 1; i < stream.size(); ++i) {
    const auto gap = stream[i].timestamp_ms - stream[i - 1].timestamp_ms;
    ++g.count;
    total += static_cast<double>(gap);
    g.min_ms = std::min(g.min_ms, gap);
    g.max_ms = std::max(g.max_ms, gap);
    std::size_t bucket = GapStats::kEdgesMs.size();
    for (std::size_t b = 0; b < GapStats::kEdgesMs.size(); ++b) {
      if (gap <= GapStats::kEdgesMs[b]) {
        bucket = b;
        break;
      }
    }
    ++g.histogram[bucket];
  }
  g.mean_ms = total / static_cast<double>(g.count);
  return g;
}

SnapshotStream synth_lob_stream(std::uint64_t seed, std::size_t n, const Regime& r) {
  if (!(r.spread > 0.0)) raise(ErrorCode::InvalidRegime, "spread must be positive");
  if (!(r.vol >= 0.0)) raise(ErrorCode::InvalidRegime, "vol must be non-negative");
  if (!(r.initial_mid > 0.0)) raise(ErrorCode::InvalidRegime, "initial midprice must be positive");
  if (!(r.level_gap > 0.0)) raise(ErrorCode::InvalidRegime, "level gap must be positive");
  if (!(r.imbalance_phi >= 0.0 && r.imbalance_phi < 1.0)) {
    raise(ErrorCode::InvalidRegime, "imbalance persistence must lie in [0, 1)");
  }
  if (!(r.imbalance_sd > 0.0) || !(r.signal_snr >= 0.0)) {
    raise(ErrorCode::InvalidRegime, "imbalance sd must be positive and snr non-negative");
  }
  for (double d : r.depth_profile) {
    if (!(d > 0.0)) raise(ErrorCode::InvalidRegime, "depth profile entries must be positive");
  }
  if (n == 0) raise(ErrorCode::InvalidRegime, "n must be at least 1");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> jitter(-0.2, 0.2);

  const double innovation_sd = r.imbalance_sd * std::sqrt(1.0 - r.imbalance_phi * r.imbalance_phi);
  const double signal_coef = std::sqrt(r.signal_snr) * r.vol / r.imbalance_sd;

  SnapshotStream stream;
  stream.source_id = "synthetic-" + std::to_string(seed);
  stream.snapshots.reserve(n);

  double log_mid = std::log(r.initial_mid);
  double imbalance = r.imbalance_sd * normal(rng);
  for (std::size_t t = 0; t < n; ++t) {
    const double mid = std::exp(log_mid);
    const double skew = std::clamp(imbalance, -0.95, 0.95);

    LobSnapshot s;
    s.timestamp_ms = r.start_timestamp_ms + static_cast<std::int64_t>(t) * r.step_ms;
    for (std::size_t l = 0; l < kLevels; ++l) {
      const double offset = r.spread / 2.0 + static_cast<double>(l) * r.level_gap;
      s.bids[l].price = mid - offset;
      s.asks[l].price = mid + offset;
      if (l == 0) {
        s.bids[l].qty = r.depth_profile[0] * (1.0 + skew);
        s.asks[l].qty = r.depth_profile[0] * (1.0 - skew);
      } else {
        s.bids[l].qty = r.depth_profile[l] * (1.0 + jitter(rng));
        s.asks[l].qty = r.depth_profile[l] * (1.0 + jitter(rng));
      }
    }
    stream.snapshots.push_back(s);

    const double noise = normal(rng);
    log_mid += r.drift + signal_coef * imbalance + r.vol * noise;
    imbalance = r.imbalance_phi * imbalance + innovation_sd * normal(rng);
  }
  return stream;
}

}  // namespace hflab::lob
