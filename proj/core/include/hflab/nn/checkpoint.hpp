// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "hflab/nn/layers.hpp"
#include "hflab/nn/optim.hpp"

namespace hflab::nn {

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view text) noexcept;

/// Free-form text blocks stored in the checkpoint header.
struct CheckpointHeader {
  std::string spec_text;
  std::string meta_text;
};

/// Layout (little-endian):
///   "HFLABCKP" | u8 version | u64 fnv1a(spec_text) | str spec_text | str meta_text
///   | u32 count | count x (str name | u32 rank | rank x u64 dim | numel x f32)
///   | u8 has_optimizer [| u64 steps | per parameter: numel x f64 m, numel x f64 v]
/// where str is u32 length + bytes.
void save_checkpoint(const std::filesystem::path& path, const CheckpointHeader& header, const ParameterList& params,
                     const AdamW* optimizer = nullptr);

CheckpointHeader read_checkpoint_header(const std::filesystem::path& path);

/// Loads weights into `params`, which must already have matching names and
/// shapes. Restores optimizer moments when `optimizer` is given and the file
/// carries them. Throws BadCheckpoint.
CheckpointHeader load_checkpoint(const std::filesystem::path& path, ParameterList& params,
                                 AdamW* optimizer = nullptr);

}  // namespace hflab::nn
