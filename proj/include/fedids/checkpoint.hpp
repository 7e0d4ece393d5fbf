#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fedids/nn.hpp"

namespace fedids {

/// Checkpoint layout (big-endian):
///   "FDNN" | u32 version (=1) | u8 hidden activation | u8 output activation |
///   u32 layer-size count | u64 layer sizes... | u64 parameter count |
///   f64 parameters (IEEE-754 bit patterns, ParamVector order)
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const DenseNet& net);
DenseNet decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const DenseNet& net, const std::filesystem::path& path);
DenseNet load_checkpoint(const std::filesystem::path& path);

}  // namespace fedids
