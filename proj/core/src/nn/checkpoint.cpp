// SPDX-License-Identifier: Apache-2.0
#include "hflab/nn/checkpoint.hpp"

#include <algorithm>
#include <fstream>

#include "../binio.hpp"
#include "hflab/error.hpp"

namespace hflab::nn {
namespace {

constexpr char kMagic[8] = {'H', 'F', 'L', 'A', 'B', 'C', 'K', 'P'};
constexpr std::uint8_t kVersion = 1;

CheckpointHeader read_header(std::istream& in, const std::filesystem::path& path) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + 8, kMagic)) {
    raise(ErrorCode::BadCheckpoint, path.string() + " is not a checkpoint");
  }
  if (binio::get<std::uint8_t>(in) != kVersion) raise(ErrorCode::BadCheckpoint, "unsupported checkpoint version");
  const auto digest = binio::get<std::uint64_t>(in);
  CheckpointHeader header;
  header.spec_text = binio::get_string(in);
  header.meta_text = binio::get_string(in);
  if (fnv1a(header.spec_text) != digest) raise(ErrorCode::BadCheckpoint, "model spec digest mismatch");
  return header;
}

}  // namespace

std::uint64_t fnv1a(std::string_view text) noexcept {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

void save_checkpoint(const std::filesystem::path& path, const CheckpointHeader& header, const ParameterList& params,
                     const AdamW* optimizer) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(ErrorCode::Io, "cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  binio::put<std::uint8_t>(out, kVersion);
  binio::put<std::uint64_t>(out, fnv1a(header.spec_text));
  binio::put_string(out, header.spec_text);
  binio::put_string(out, header.meta_text);
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params.items()) {
    binio::put_string(out, p.name);
    const auto& shape = p.tensor.shape();
    binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) binio::put<std::uint64_t>(out, d);
    for (double v : p.tensor.values()) binio::put<float>(out, static_cast<float>(v));
  }
  binio::put<std::uint8_t>(out, optimizer ? 1 : 0);
  if (optimizer) {
    binio::put<std::uint64_t>(out, optimizer->steps());
    for (std::size_t k = 0; k < params.size(); ++k) {
      for (double v : optimizer->first_moments()[k]) binio::put<double>(out, v);
      for (double v : optimizer->second_moments()[k]) binio::put<double>(out, v);
    }
  }
  if (!out) raise(ErrorCode::Io, "write failed for " + path.string());
}

CheckpointHeader read_checkpoint_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::Io, "cannot open " + path.string());
  return read_header(in, path);
}

CheckpointHeader load_checkpoint(const std::filesystem::path& path, ParameterList& params, AdamW* optimizer) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::Io, "cannot open " + path.string());
  CheckpointHeader header = read_header(in, path);
  const auto count = binio::get<std::uint32_t>(in);
  if (count != params.size()) {
    raise(ErrorCode::BadCheckpoint, "checkpoint has " + std::to_string(count) + " parameters, model has " +
                                        std::to_string(params.size()));
  }
  for (auto& p : params.items()) {
    const std::string name = binio::get_string(in);
    if (name != p.name) raise(ErrorCode::BadCheckpoint, "expected parameter " + p.name + ", found " + name);
    const auto rank = binio::get<std::uint32_t>(in);
    Shape shape(rank);
    for (auto& d : shape) d = binio::get<std::uint64_t>(in);
    if (shape != p.tensor.shape()) {
      raise(ErrorCode::BadCheckpoint, "shape mismatch for " + name + ": " + shape_string(shape) + " vs " +
                                          shape_string(p.tensor.shape()));
    }
    for (double& v : p.tensor.mutable_values()) v = static_cast<double>(binio::get<float>(in));
  }
  const auto has_opt = binio::get<std::uint8_t>(in);
  if (has_opt && optimizer) {
    optimizer->set_steps(binio::get<std::uint64_t>(in));
    for (std::size_t k = 0; k < params.size(); ++k) {
      for (double& v : optimizer->first_moments()[k]) v = binio::get<double>(in);
      for (double& v : optimizer->second_moments()[k]) v = binio::get<double>(in);
    }
  }
  return header;
}

}  // namespace hflab::nn
