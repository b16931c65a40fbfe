#pragma once

#include <cstdint>
#include <string>

#include "genequery/common.hpp"

namespace gq::model {

enum class Mode { spot_aware, gene_aware };

inline std::string mode_name(Mode m) { return m == Mode::spot_aware ? "spot_aware" : "gene_aware"; }

inline Mode mode_from(const std::string& s) {
  if (s == "spot_aware") return Mode::spot_aware;
  if (s == "gene_aware") return Mode::gene_aware;
  fail(errc::config, "unknown mode: " + s);
}

struct ModelConfig {
  Mode mode = Mode::gene_aware;
  std::size_t d_fuse = 256;
  std::size_t layers = 2;  // transformer blocks (L)
  std::size_t heads = 8;
  std::size_t max_len = 0;  // 0 resolves to the mode default below
  std::size_t img_in_dim = 0;
  std::size_t gene_in_dim = 0;
  std::uint64_t seed = 0;
  // Optional learned 2-D coordinate embedding for spot-aware sequences; off
  // by default (the forward is then permutation-equivariant).
  bool pos_embedding = false;
  std::size_t pos_table = 64;  // coordinate tables are indexed mod this size

  // Longest sequence a single transformer pass accepts; longer inputs are
  // processed in consecutive chunks, never truncated.
  std::size_t resolved_max_len() const {
    if (max_len > 0) return max_len;
    return mode == Mode::gene_aware ? 3467 : 2400;
  }

  void validate() const {
    if (d_fuse == 0 || heads == 0 || d_fuse % heads != 0)
      fail(errc::config, "d_fuse " + std::to_string(d_fuse) + " not divisible by heads " +
                             std::to_string(heads));
    if (img_in_dim == 0 || gene_in_dim == 0)
      fail(errc::config, "img_in_dim and gene_in_dim must be set");
    if (resolved_max_len() < 1) fail(errc::config, "max_len must be >= 1");
    if (pos_embedding && pos_table == 0) fail(errc::config, "pos_table must be >= 1");
  }
};

}  // namespace gq::model
