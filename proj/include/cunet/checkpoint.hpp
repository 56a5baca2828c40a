#pragma once

#include <string>
#include <string_view>

#include "cunet/optim.hpp"

namespace cunet {

// Checkpoint layout (all integers little-endian):
//   "CUN1"
//   u32 entry count
//   per entry: u32 name length, name bytes, u64 n, c, h, w
//   per entry, in manifest order: raw f64 payload
// Momentum buffers are stored as extra entries named "momentum/<param>".

std::string encode_checkpoint(const ParamSet& params);
ParamSet decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::string& path, const ParamSet& params);
ParamSet load_checkpoint(const std::string& path);

/// Loads into an existing set; names and shapes must match exactly.
void load_checkpoint_into(const std::string& path, ParamSet& params);

}  // namespace cunet
