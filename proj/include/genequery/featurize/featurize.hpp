#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "genequery/numcore/tensor.hpp"
#include "genequery/stdata/types.hpp"

namespace gq::feat {

enum class FeatKind { hashed_text, patch_stats, tiny_conv, precomputed, passthrough };

std::string feat_kind_name(FeatKind k);
FeatKind feat_kind_from(const std::string& name);

struct FeaturizerSpec {
  FeatKind kind = FeatKind::hashed_text;
  std::size_t output_dim = 64;       // embedding dim (hashed_text) / out channels (tiny_conv)
  std::size_t vocab_buckets = 8192;  // V for hashed_text
  bool trainable = false;            // tiny_conv and the embedding table only
  std::uint64_t seed = 0;
  std::string source;                // required for precomputed
};

// Lowercase ASCII tokens split on non-alphanumeric bytes.
std::vector<std::string> tokenize(const std::string& text);

// FNV-1a 64-bit bucket ids, token-by-token, mod V.
std::vector<std::size_t> token_buckets(const std::string& text, std::size_t vocab_buckets);

// features.f32 framing plus an adjacent ids.tsv naming each row.
std::unordered_map<std::string, std::vector<float>> load_precomputed(
    const std::filesystem::path& features_path);

// E_gene: gene metadata -> fixed-dim vector. hashed_text averages seeded
// bucket embeddings of the description tokens (falling back to the gene name
// when the description yields no tokens); precomputed looks the name up in an
// ingested table.
class GeneFeaturizer {
 public:
  static GeneFeaturizer make(const FeaturizerSpec& spec);

  std::size_t dim() const { return dim_; }
  const FeaturizerSpec& spec() const { return spec_; }

  std::vector<float> encode(const data::GeneRecord& record) const;

  // Bucket ids feeding the embedding mean; the trainable path gathers these
  // rows inside the training graph.
  std::vector<std::size_t> buckets(const data::GeneRecord& record) const;

  const num::Tensor<float>& embedding_table() const { return table_; }

  // Replaces the seeded table with a trained one (checkpoint restore).
  void set_embedding_table(num::Tensor<float> t) {
    if (!t.same_shape(table_)) fail(errc::shape, "embedding table shape mismatch");
    table_ = std::move(t);
  }

 private:
  FeaturizerSpec spec_;
  std::size_t dim_ = 0;
  num::Tensor<float> table_;  // vocab_buckets x output_dim (hashed_text)
  std::unordered_map<std::string, std::vector<float>> precomputed_;
};

// E_img: spot payload -> fixed-dim vector. patch payloads go through
// patch_stats (per-channel 8-bin histogram + mean + std, 30 dims) or the
// seeded tiny_conv; feature payloads pass through unchanged or resolve from a
// precomputed table by spot id.
class ImageFeaturizer {
 public:
  static ImageFeaturizer make(const FeaturizerSpec& spec, const data::Manifest& manifest);

  std::size_t dim() const { return dim_; }
  const FeaturizerSpec& spec() const { return spec_; }

  std::vector<float> encode(const data::SpotRecord& spot) const;

  // tiny_conv parameters for the trainable path.
  const num::Tensor<float>& conv1_w() const { return c1w_; }
  const num::Tensor<float>& conv1_b() const { return c1b_; }
  const num::Tensor<float>& conv2_w() const { return c2w_; }
  const num::Tensor<float>& conv2_b() const { return c2b_; }

  // Patch bytes as (3, h, w) planes scaled to [0, 1].
  num::Tensor<float> patch_planes(const data::SpotRecord& spot) const;

  void set_conv_params(num::Tensor<float> c1w, num::Tensor<float> c1b, num::Tensor<float> c2w,
                       num::Tensor<float> c2b) {
    if (!c1w.same_shape(c1w_) || !c1b.same_shape(c1b_) || !c2w.same_shape(c2w_) ||
        !c2b.same_shape(c2b_))
      fail(errc::shape, "conv parameter shape mismatch");
    c1w_ = std::move(c1w);
    c1b_ = std::move(c1b);
    c2w_ = std::move(c2w);
    c2b_ = std::move(c2b);
  }

 private:
  FeaturizerSpec spec_;
  std::size_t dim_ = 0;
  std::size_t patch_h_ = 0, patch_w_ = 0, feature_dim_ = 0;
  num::Tensor<float> c1w_, c1b_, c2w_, c2b_;
  std::unordered_map<std::string, std::vector<float>> precomputed_;
};

inline constexpr std::size_t kTinyConvHidden = 16;
inline constexpr std::size_t kPatchStatsDim = 30;

}  // namespace gq::feat
