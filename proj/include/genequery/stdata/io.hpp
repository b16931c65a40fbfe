#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "genequery/stdata/types.hpp"

namespace gq::data {

// Binary matrix framing shared by expression, feature, precomputed-embedding
// and latent files: magic "GQEX", u32 version=1, u32 rows, u32 cols, then
// rows*cols little-endian 32-bit floats, row-major.
struct MatrixF32 {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> values;
};

void write_matrix_f32(const std::filesystem::path& path, const MatrixF32& m);
MatrixF32 read_matrix_f32(const std::filesystem::path& path);

// Patch stack framing: magic "GQPX", u32 version=1, u32 count, u32 h, u32 w,
// u32 channels=3, then count*h*w*3 raw bytes in spot order.
struct PatchStack {
  std::size_t count = 0;
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<std::uint8_t> bytes;
};

void write_patches_u8(const std::filesystem::path& path, const PatchStack& p);
PatchStack read_patches_u8(const std::filesystem::path& path);

// Dataset directory layout:
//   manifest.txt            key=value lines
//   genes.tsv               name <tab> description
//   <wsi>/spots.tsv         spot_id <tab> x <tab> y
//   <wsi>/expression.f32    GQEX framing, rows = spots, cols = genes
//   <wsi>/features.f32      GQEX framing (payload_kind = feature)
//   <wsi>/patches.u8        GQPX framing (payload_kind = patch)
Dataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);

}  // namespace gq::data
