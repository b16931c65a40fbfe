#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "genequery/stdata/types.hpp"

namespace gq::data {

// Synthetic dataset with a planted image->gene signal. Gene descriptions are
// random token strings carrying 4 tokens from a shared signal vocabulary; a
// fixed projection (independent of any model seed, and of the dataset seed,
// so token semantics line up across generated datasets) maps those tokens to
// a gene latent u_g. Each spot carries a latent v_s inside its feature vector
// plus distractor dims, and raw expression is
//   y = max(0, round(50 * sigmoid(u_g . v_s) + noise_sd * noise)).
// Expression is therefore predictable from (spot features, gene text)
// jointly, including for held-out genes, because the signal lives in shared
// tokens.
struct SynthParams {
  std::size_t n_wsis = 2;
  std::size_t spots_per_wsi = 200;
  std::size_t m_genes = 60;
  std::size_t feature_dim = 16;
  double noise_sd = 1.0;
  std::uint64_t seed = 1;
  // Shifts gene names (G0000, G0001, ...) so two generated datasets can share
  // a controlled fraction of their libraries.
  std::size_t gene_name_offset = 0;
};

inline constexpr std::size_t kSynthSignalPool = 24;   // distinct signal tokens
inline constexpr std::size_t kSynthSignalPerGene = 4; // signal tokens per description
inline constexpr std::size_t kSynthLatentMax = 8;     // latent dim cap

Dataset synth_make(const SynthParams& p);
void synth_generate(const SynthParams& p, const std::filesystem::path& out_dir);

// The latent a description maps to, derived purely from its signal tokens.
// Identical descriptions always share a latent, hence identical expression
// columns at noise_sd = 0.
std::vector<double> synth_gene_latent(const std::string& description, std::size_t latent_dim);

}  // namespace gq::data
