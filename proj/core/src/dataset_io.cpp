// SPDX-License-Identifier: Apache-2.0
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include "binio.hpp"
#include "hflab/error.hpp"
#include "hflab/features.hpp"

namespace hflab::features {
namespace {

constexpr char kMagic[8] = {'H', 'F', 'L', 'A', 'B', 'F', 'E', 'A'};
constexpr std::uint8_t kVersion = 1;
constexpr std::uint64_t kCols = kNumFeatures + 1;

void check_shape(const Dataset& d) {
  if (d.rows.size() != d.targets.size()) {
    raise(ErrorCode::ShapeMismatch, "dataset rows and targets differ in length");
  }
}

}  // namespace

void write_dataset_binary(const std::filesystem::path& path, const Dataset& d) {
  check_shape(d);
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorCode::Io, "cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  binio::put<std::uint8_t>(out, kVersion);
  binio::put<std::uint64_t>(out, d.rows.size());
  binio::put<std::uint64_t>(out, kCols);
  binio::put<std::uint32_t>(out, d.horizon);
  for (std::size_t r = 0; r < d.rows.size(); ++r) {
    for (double v : d.rows[r]) binio::put<double>(out, v);
    binio::put<double>(out, d.targets[r]);
  }
  if (!out) raise(ErrorCode::Io, "write failed for " + path.string());
}

Dataset read_dataset_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::Io, "cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + 8, kMagic)) {
    raise(ErrorCode::BadCheckpoint, path.string() + " is not a feature dataset");
  }
  if (binio::get<std::uint8_t>(in) != kVersion) raise(ErrorCode::BadCheckpoint, "unsupported dataset version");
  const auto n_rows = binio::get<std::uint64_t>(in);
  const auto n_cols = binio::get<std::uint64_t>(in);
  if (n_cols != kCols) raise(ErrorCode::BadCheckpoint, "dataset has " + std::to_string(n_cols) + " columns");
  Dataset d;
  d.horizon = binio::get<std::uint32_t>(in);
  d.rows.resize(n_rows);
  d.targets.resize(n_rows);
  for (std::size_t r = 0; r < n_rows; ++r) {
    for (double& v : d.rows[r]) v = binio::get<double>(in);
    d.targets[r] = binio::get<double>(in);
  }
  return d;
}

void write_dataset_csv(const std::filesystem::path& path, const Dataset& d) {
  check_shape(d);
  std::ofstream out(path);
  if (!out) raise(ErrorCode::Io, "cannot write " + path.string());
  for (std::size_t c = 0; c < kNumFeatures; ++c) out << 'f' << c << ',';
  out << "target_h" << d.horizon << '\n';
  char buf[64];
  auto put = [&](double v) {
    if (std::isnan(v)) {
      out << "nan";
      return;
    }
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    out.write(buf, ptr - buf);
  };
  for (std::size_t r = 0; r < d.rows.size(); ++r) {
    for (double v : d.rows[r]) {
      put(v);
      out << ',';
    }
    put(d.targets[r]);
    out << '\n';
  }
  if (!out) raise(ErrorCode::Io, "write failed for " + path.string());
}

Dataset read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::Io, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) raise(ErrorCode::MalformedRecord, "empty dataset csv");
  Dataset d;
  const auto pos = line.rfind("target_h");
  if (pos == std::string::npos) raise(ErrorCode::MalformedRecord, "dataset header lacks target column");
  d.horizon = static_cast<std::uint32_t>(std::stoul(line.substr(pos + 8)));
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    FeatureRow row{};
    double target = 0.0;
    std::size_t c = 0;
    while (std::getline(ss, cell, ',')) {
      double v = std::numeric_limits<double>::quiet_NaN();
      if (cell != "nan") {
        auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
        if (ec != std::errc{}) raise(ErrorCode::MalformedRecord, "non-numeric dataset cell '" + cell + "'");
      }
      if (c < kNumFeatures) {
        row[c] = v;
      } else if (c == kNumFeatures) {
        target = v;
      }
      ++c;
    }
    if (c != kCols) raise(ErrorCode::MalformedRecord, "dataset row has " + std::to_string(c) + " cells");
    d.rows.push_back(row);
    d.targets.push_back(target);
  }
  return d;
}

}  // namespace hflab::features
