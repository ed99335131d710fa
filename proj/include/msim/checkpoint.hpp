#pragma once

#include <string>

#include "msim/params.hpp"

namespace msim {

// Checkpoint container: magic "SWCK1\n", then one record per parameter in
// name order: u32 name length, name bytes, u32 rank, u32 extents, then the
// values as little-endian f32 in row-major order. Values are quantized to
// f32 on save, so save -> load -> save reproduces the file byte for byte.
void save_checkpoint(const std::string& path, const ParamMap& params);
ParamMap load_checkpoint(const std::string& path);

// 64-bit FNV-1a over the serialized form, as a fixed-width hex string.
// Used to verify that a parameter set was not touched.
std::string checkpoint_digest(const ParamMap& params);

}  // namespace msim
