#include "genequery/featurize/featurize.hpp"

#include <cmath>
#include <fstream>

#include "genequery/numcore/prng.hpp"
#include "genequery/numcore/tape.hpp"
#include "genequery/numcore/transformer.hpp"
#include "genequery/stdata/io.hpp"

namespace gq::feat {

std::string feat_kind_name(FeatKind k) {
  switch (k) {
    case FeatKind::hashed_text: return "hashed_text";
    case FeatKind::patch_stats: return "patch_stats";
    case FeatKind::tiny_conv: return "tiny_conv";
    case FeatKind::precomputed: return "precomputed";
    case FeatKind::passthrough: return "passthrough";
  }
  fail(errc::argument, "bad featurizer kind");
}

FeatKind feat_kind_from(const std::string& name) {
  if (name == "hashed_text") return FeatKind::hashed_text;
  if (name == "patch_stats") return FeatKind::patch_stats;
  if (name == "tiny_conv") return FeatKind::tiny_conv;
  if (name == "precomputed") return FeatKind::precomputed;
  if (name == "passthrough") return FeatKind::passthrough;
  fail(errc::config, "unknown featurizer kind: " + name);
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char raw : text) {
    auto c = static_cast<unsigned char>(raw);
    char lower = 0;
    if (c >= 'a' && c <= 'z')
      lower = static_cast<char>(c);
    else if (c >= 'A' && c <= 'Z')
      lower = static_cast<char>(c - 'A' + 'a');
    else if (c >= '0' && c <= '9')
      lower = static_cast<char>(c);
    if (lower) {
      cur.push_back(lower);
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

std::vector<std::size_t> token_buckets(const std::string& text, std::size_t vocab_buckets) {
  std::vector<std::size_t> out;
  for (const auto& tok : tokenize(text))
    out.push_back(static_cast<std::size_t>(num::fnv1a64(tok) % vocab_buckets));
  return out;
}

std::unordered_map<std::string, std::vector<float>> load_precomputed(
    const std::filesystem::path& features_path) {
  auto m = data::read_matrix_f32(features_path);
  auto ids_path = features_path.parent_path() / "ids.tsv";
  std::ifstream f(ids_path);
  if (!f) fail(errc::data, "missing file: " + ids_path.string());
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) ids.push_back(line);
  }
  if (ids.size() != m.rows)
    fail(errc::data, "ids.tsv row count " + std::to_string(ids.size()) +
                         " does not match feature rows " + std::to_string(m.rows));
  std::unordered_map<std::string, std::vector<float>> table;
  for (std::size_t i = 0; i < ids.size(); ++i)
    table[ids[i]] = std::vector<float>(m.values.begin() + static_cast<std::ptrdiff_t>(i * m.cols),
                                       m.values.begin() + static_cast<std::ptrdiff_t>((i + 1) * m.cols));
  return table;
}

GeneFeaturizer GeneFeaturizer::make(const FeaturizerSpec& spec) {
  GeneFeaturizer g;
  g.spec_ = spec;
  switch (spec.kind) {
    case FeatKind::hashed_text: {
      if (spec.output_dim < 1 || spec.vocab_buckets < 1)
        fail(errc::config, "hashed_text featurizer needs output_dim and vocab_buckets >= 1");
      g.dim_ = spec.output_dim;
      num::Rng rng(num::mix(spec.seed, "gene.embedding"));
      g.table_ = num::Tensor<float>({spec.vocab_buckets, spec.output_dim});
      for (auto& v : g.table_) v = static_cast<float>(rng.normal());
      break;
    }
    case FeatKind::precomputed: {
      if (spec.source.empty()) fail(errc::config, "precomputed featurizer needs a source file");
      g.precomputed_ = load_precomputed(spec.source);
      if (g.precomputed_.empty()) fail(errc::data, "precomputed table is empty");
      g.dim_ = g.precomputed_.begin()->second.size();
      break;
    }
    default:
      fail(errc::config, "gene featurizer must be hashed_text or precomputed");
  }
  return g;
}

std::vector<std::size_t> GeneFeaturizer::buckets(const data::GeneRecord& record) const {
  if (spec_.kind != FeatKind::hashed_text)
    fail(errc::state, "buckets() requires the hashed_text featurizer");
  auto b = token_buckets(record.description, spec_.vocab_buckets);
  if (b.empty()) b = token_buckets(record.name, spec_.vocab_buckets);
  return b;
}

std::vector<float> GeneFeaturizer::encode(const data::GeneRecord& record) const {
  if (spec_.kind == FeatKind::precomputed) {
    auto it = precomputed_.find(record.name);
    if (it == precomputed_.end()) fail(errc::not_found, "unknown gene: " + record.name);
    return it->second;
  }
  auto b = buckets(record);
  std::vector<float> out(dim_, 0.0f);
  if (b.empty()) return out;
  for (std::size_t bucket : b)
    for (std::size_t c = 0; c < dim_; ++c) out[c] += table_.at(bucket, c);
  float inv = 1.0f / static_cast<float>(b.size());
  for (auto& v : out) v *= inv;
  return out;
}

ImageFeaturizer ImageFeaturizer::make(const FeaturizerSpec& spec, const data::Manifest& manifest) {
  ImageFeaturizer im;
  im.spec_ = spec;
  im.patch_h_ = manifest.patch_h;
  im.patch_w_ = manifest.patch_w;
  im.feature_dim_ = manifest.feature_dim;
  switch (spec.kind) {
    case FeatKind::patch_stats:
      if (manifest.payload_kind != data::PayloadKind::patch)
        fail(errc::config, "patch_stats featurizer needs patch payloads");
      im.dim_ = kPatchStatsDim;
      break;
    case FeatKind::tiny_conv: {
      if (manifest.payload_kind != data::PayloadKind::patch)
        fail(errc::config, "tiny_conv featurizer needs patch payloads");
      if (spec.output_dim < 1) fail(errc::config, "tiny_conv needs output_dim >= 1");
      im.dim_ = spec.output_dim;
      im.c1w_ = num::normal_init<float>({kTinyConvHidden, 3, 3, 3}, num::mix(spec.seed, "conv1.w"), 0.1);
      im.c1b_ = num::Tensor<float>({kTinyConvHidden});
      im.c2w_ = num::normal_init<float>({spec.output_dim, kTinyConvHidden, 3, 3},
                                        num::mix(spec.seed, "conv2.w"), 0.1);
      im.c2b_ = num::Tensor<float>({spec.output_dim});
      break;
    }
    case FeatKind::passthrough:
      if (manifest.payload_kind != data::PayloadKind::feature)
        fail(errc::config, "passthrough featurizer needs feature payloads");
      im.dim_ = manifest.feature_dim;
      break;
    case FeatKind::precomputed: {
      if (spec.source.empty()) fail(errc::config, "precomputed featurizer needs a source file");
      im.precomputed_ = load_precomputed(spec.source);
      if (im.precomputed_.empty()) fail(errc::data, "precomputed table is empty");
      im.dim_ = im.precomputed_.begin()->second.size();
      break;
    }
    default:
      fail(errc::config, "image featurizer must be patch_stats, tiny_conv, passthrough or precomputed");
  }
  return im;
}

num::Tensor<float> ImageFeaturizer::patch_planes(const data::SpotRecord& spot) const {
  std::size_t expect = patch_h_ * patch_w_ * 3;
  if (spot.patch.size() != expect)
    fail(errc::data, "patch byte count " + std::to_string(spot.patch.size()) +
                         " does not match manifest dims (" + std::to_string(expect) + ") for spot " +
                         spot.spot_id);
  num::Tensor<float> planes({3, patch_h_, patch_w_});
  for (std::size_t i = 0; i < patch_h_ * patch_w_; ++i)
    for (std::size_t ch = 0; ch < 3; ++ch)
      planes[ch * patch_h_ * patch_w_ + i] = static_cast<float>(spot.patch[i * 3 + ch]) / 255.0f;
  return planes;
}

std::vector<float> ImageFeaturizer::encode(const data::SpotRecord& spot) const {
  switch (spec_.kind) {
    case FeatKind::passthrough: {
      if (spot.feature.size() != feature_dim_)
        fail(errc::data, "feature size " + std::to_string(spot.feature.size()) +
                             " does not match manifest feature_dim " + std::to_string(feature_dim_) +
                             " for spot " + spot.spot_id);
      return spot.feature;
    }
    case FeatKind::precomputed: {
      auto it = precomputed_.find(spot.spot_id);
      if (it == precomputed_.end()) fail(errc::not_found, "unknown spot id: " + spot.spot_id);
      return it->second;
    }
    case FeatKind::patch_stats: {
      std::size_t expect = patch_h_ * patch_w_ * 3;
      if (spot.patch.size() != expect)
        fail(errc::data, "patch byte count " + std::to_string(spot.patch.size()) +
                             " does not match manifest dims (" + std::to_string(expect) +
                             ") for spot " + spot.spot_id);
      std::vector<float> out(kPatchStatsDim, 0.0f);
      std::size_t pixels = patch_h_ * patch_w_;
      for (std::size_t ch = 0; ch < 3; ++ch) {
        double hist[8] = {0};
        double sum = 0.0, sumsq = 0.0;
        for (std::size_t i = 0; i < pixels; ++i) {
          std::uint8_t v = spot.patch[i * 3 + ch];
          hist[v >> 5] += 1.0;
          double x = static_cast<double>(v) / 255.0;
          sum += x;
          sumsq += x * x;
        }
        double mean = sum / static_cast<double>(pixels);
        double var = std::max(0.0, sumsq / static_cast<double>(pixels) - mean * mean);
        for (std::size_t b = 0; b < 8; ++b)
          out[ch * 10 + b] = static_cast<float>(hist[b] / static_cast<double>(pixels));
        out[ch * 10 + 8] = static_cast<float>(mean);
        out[ch * 10 + 9] = static_cast<float>(std::sqrt(var));
      }
      return out;
    }
    case FeatKind::tiny_conv: {
      // Frozen forward runs the same graph ops as the trainable path.
      num::Tape<float> tape;
      auto x = tape.input(patch_planes(spot));
      auto c1 = tape.relu(tape.conv2d(x, tape.input(c1w_), tape.input(c1b_), 2, 1));
      auto c2 = tape.relu(tape.conv2d(c1, tape.input(c2w_), tape.input(c2b_), 2, 1));
      auto pooled = tape.global_mean_pool(c2);
      const auto& v = tape.val(pooled);
      return std::vector<float>(v.begin(), v.end());
    }
    default:
      fail(errc::state, "image featurizer misconfigured");
  }
}

}  // namespace gq::feat
