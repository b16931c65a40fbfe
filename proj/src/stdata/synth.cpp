#include "genequery/stdata/synth.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>

#include "genequery/numcore/prng.hpp"
#include "genequery/stdata/io.hpp"

namespace gq::data {

namespace {

// Fixed projection seed: signal-token semantics are shared by every generated
// dataset and by nothing in any trained model.
constexpr std::uint64_t kSignalProjSeed = 0x5163BADC0FFEE123ULL;

std::string signal_token(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "sig%03zu", i);
  return buf;
}

std::vector<double> token_latent(const std::string& token, std::size_t dim) {
  num::Rng rng(num::mix(kSignalProjSeed, token));
  std::vector<double> v(dim);
  for (auto& x : v) x = rng.normal();
  return v;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

std::vector<double> synth_gene_latent(const std::string& description, std::size_t latent_dim) {
  std::vector<double> u(latent_dim, 0.0);
  std::size_t found = 0;
  std::size_t start = 0;
  while (start <= description.size()) {
    std::size_t sp = description.find(' ', start);
    std::string tok = description.substr(start, sp == std::string::npos ? sp : sp - start);
    start = sp == std::string::npos ? description.size() + 1 : sp + 1;
    if (tok.size() != 6 || tok.compare(0, 3, "sig") != 0) continue;
    if (!std::isdigit(static_cast<unsigned char>(tok[3])) ||
        !std::isdigit(static_cast<unsigned char>(tok[4])) ||
        !std::isdigit(static_cast<unsigned char>(tok[5])))
      continue;
    std::size_t idx = static_cast<std::size_t>(std::stoul(tok.substr(3)));
    if (idx >= kSynthSignalPool) continue;
    auto lat = token_latent(tok, latent_dim);
    for (std::size_t i = 0; i < latent_dim; ++i) u[i] += lat[i];
    ++found;
  }
  if (found > 0) {
    double inv = 1.0 / std::sqrt(static_cast<double>(found));
    for (auto& x : u) x *= inv;
  }
  return u;
}

Dataset synth_make(const SynthParams& p) {
  if (p.n_wsis < 1 || p.spots_per_wsi < 1 || p.m_genes < 1 || p.feature_dim < 1)
    fail(errc::argument, "synth_make: all counts must be >= 1");
  std::size_t dl = std::min(kSynthLatentMax, p.feature_dim);

  Dataset ds;
  ds.manifest.payload_kind = PayloadKind::feature;
  ds.manifest.feature_dim = p.feature_dim;
  ds.manifest.n_genes = p.m_genes;

  // Gene library: name plus a shuffled description of signal and filler
  // tokens.
  std::vector<GeneRecord> records(p.m_genes);
  for (std::size_t j = 0; j < p.m_genes; ++j) {
    num::Rng rng(num::mix(p.seed, num::mix(num::fnv1a64("synth.gene"), j)));
    char name[16];
    std::snprintf(name, sizeof(name), "G%04zu", p.gene_name_offset + j);
    records[j].name = name;

    std::vector<std::string> tokens;
    std::vector<std::size_t> pool(kSynthSignalPool);
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
    num::shuffle(pool, rng);
    for (std::size_t t = 0; t < kSynthSignalPerGene; ++t) tokens.push_back(signal_token(pool[t]));
    for (std::size_t t = 0; t < 2; ++t) {
      char filler[16];
      std::snprintf(filler, sizeof(filler), "tok%06llx",
                    static_cast<unsigned long long>(rng.next_u64() & 0xFFFFFFULL));
      tokens.push_back(filler);
    }
    num::shuffle(tokens, rng);
    std::string desc;
    for (std::size_t t = 0; t < tokens.size(); ++t) {
      if (t) desc += ' ';
      desc += tokens[t];
    }
    records[j].description = std::move(desc);
  }
  ds.genes = GeneLibrary::from_records(std::move(records));

  std::vector<std::vector<double>> gene_latents(p.m_genes);
  for (std::size_t j = 0; j < p.m_genes; ++j)
    gene_latents[j] = synth_gene_latent(ds.genes.record(j).description, dl);

  std::size_t side = 1;
  while (side * side < p.spots_per_wsi) ++side;

  ds.expr = ExpressionMatrix(p.n_wsis * p.spots_per_wsi, p.m_genes, ExprState::raw);
  std::size_t row = 0;
  for (std::size_t w = 0; w < p.n_wsis; ++w) {
    char wsi[16];
    std::snprintf(wsi, sizeof(wsi), "W%02zu", w);
    ds.manifest.wsi_ids.emplace_back(wsi);
    num::Rng spot_rng(num::mix(p.seed, num::mix(num::fnv1a64("synth.spots"), w)));
    num::Rng noise_rng(num::mix(p.seed, num::mix(num::fnv1a64("synth.noise"), w)));
    for (std::size_t s = 0; s < p.spots_per_wsi; ++s, ++row) {
      SpotRecord spot;
      char sid[32];
      std::snprintf(sid, sizeof(sid), "%s_s%04zu", wsi, s);
      spot.spot_id = sid;
      spot.wsi_id = wsi;
      spot.x = static_cast<int>(s % side);
      spot.y = static_cast<int>(s / side);
      spot.feature.resize(p.feature_dim);
      for (auto& f : spot.feature) f = static_cast<float>(spot_rng.normal());
      for (std::size_t j = 0; j < p.m_genes; ++j) {
        double z = 0.0;
        for (std::size_t i = 0; i < dl; ++i)
          z += gene_latents[j][i] * static_cast<double>(spot.feature[i]);
        double y = std::round(50.0 * sigmoid(z) + p.noise_sd * noise_rng.normal());
        ds.expr.cell(row, j) = std::max(0.0, y);
      }
      ds.spots.push_back(std::move(spot));
    }
  }
  return ds;
}

void synth_generate(const SynthParams& p, const std::filesystem::path& out_dir) {
  save_dataset(synth_make(p), out_dir);
}

}  // namespace gq::data
