#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "genequery/numcore/params.hpp"

namespace gq::trainer {

// Bit-exact model snapshot. File layout: magic "GQCK", u32 version=1,
// u32 header byte length, header as key=value lines (config snapshot, sorted
// by key), then one section per parameter: u16 name length, name bytes,
// u8 rank, u32 dims..., little-endian f32 values; a trailing u32 section
// count closes the file.
struct Checkpoint {
  std::uint32_t version = 1;
  std::map<std::string, std::string> header;
  num::ParamStore<float> params;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace gq::trainer
