#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "hcmen/config.hpp"
#include "hcmen/tensor.hpp"

namespace hcmen {

// File layout:
//   8 bytes   magic "HCMENCK1"
//   8 bytes   little-endian uint64 header length H
//   H bytes   UTF-8 JSON {version, config, tensors: {name: {shape, offset, len}}}
//   payload   little-endian float32 values, tensors in header (name) order;
//             offset is in bytes from the payload start, len in elements
inline constexpr char kCheckpointMagic[8] = {'H', 'C', 'M', 'E', 'N', 'C', 'K', '1'};
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  ParamStore<float> params;
};

void save_checkpoint(const ParamStore<float>& params, const ModelConfig& config,
                     const std::filesystem::path& path);

// Throws LoadError on bad magic, unsupported version, malformed header or a
// truncated payload.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace hcmen
