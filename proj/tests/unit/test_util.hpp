// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "hflab/error.hpp"
#include "hflab/features.hpp"
#include "hflab/lob.hpp"

namespace hflab::testing {

// Book whose level-1 quantities are both `q1`, so the literal weighted
// midprice is q1 * mid.
inline lob::LobSnapshot book_at(double mid, std::int64_t ts, double q1 = 1.0) {
  lob::LobSnapshot s;
  s.timestamp_ms = ts;
  for (std::size_t l = 0; l < lob::kLevels; ++l) {
    const double off = 0.25 + 0.5 * static_cast<double>(l);
    const double q = l == 0 ? q1 : 1.0 + 0.5 * static_cast<double>(l);
    s.bids[l] = {mid - off, q};
    s.asks[l] = {mid + off, q};
  }
  return s;
}

inline lob::SnapshotStream stream_from_mids(const std::vector<double>& mids, std::int64_t step_ms = 100) {
  lob::SnapshotStream out;
  out.source_id = "test";
  for (std::size_t i = 0; i < mids.size(); ++i) {
    out.snapshots.push_back(book_at(mids[i], 1000 + step_ms * static_cast<std::int64_t>(i)));
  }
  return out;
}

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Runs `fn` and returns the ErrorCode it raised, or nothing.
inline std::optional<ErrorCode> code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("hflab_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Deduped synthetic stream with a planted signal.
inline lob::SnapshotStream synthetic_stream(std::uint64_t seed, std::size_t n, double snr = 1.0) {
  lob::Regime r;
  r.signal_snr = snr;
  return lob::dedup_stream(lob::synth_lob_stream(seed, n, r), features::midprice_fn());
}

inline std::shared_ptr<const std::vector<features::FeatureRow>> synthetic_rows(std::uint64_t seed, std::size_t n,
                                                                                std::size_t horizon, double snr = 1.0) {
  return std::make_shared<const std::vector<features::FeatureRow>>(
      features::build_feature_rows(synthetic_stream(seed, n, snr), horizon));
}

}  // namespace hflab::testing
