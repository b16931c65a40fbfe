#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "genequery/featurize/featurize.hpp"
#include "genequery/model/net.hpp"
#include "genequery/stdata/types.hpp"
#include "genequery/trainer/checkpoint.hpp"

namespace gq::trainer {

inline feat::FeaturizerSpec passthrough_spec() {
  feat::FeaturizerSpec s;
  s.kind = feat::FeatKind::passthrough;
  return s;
}

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 100;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  double eval_fraction = 0.1;  // held out of training for per-epoch logging only
  model::ModelConfig model;
  feat::FeaturizerSpec gene_feat;
  feat::FeaturizerSpec img_feat = passthrough_spec();

  void validate() const {
    if (epochs < 1) fail(errc::argument, "epochs must be >= 1");
    if (batch_size < 1) fail(errc::argument, "batch_size must be >= 1");
    if (!(eval_fraction >= 0.0 && eval_fraction < 1.0))
      fail(errc::argument, "eval_fraction must be in [0, 1)");
  }
};

struct EpochLog {
  std::size_t epoch = 0;             // 1-based
  double train_mse = 0.0;            // sum of squared errors / cells, over the epoch
  std::optional<double> eval_mse;    // absent when eval_fraction carves nothing
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochLog> log;
};

// Mean of squared differences over valid cells; `mask` is per-cell (empty =
// all valid). Zero valid cells is an argument error.
double mse_loss(const num::Tensor<float>& pred, const num::Tensor<float>& truth,
                const std::vector<std::uint8_t>& mask = {});

// MSE training over the fold's train WSIs, restricted to `seen_genes` when a
// gene split is active (null = all genes). `norm` must be the normalized
// expression aligned with ds row order; every truth read goes through
// ExpressionMatrix::at so access can be audited. Deterministic given cfg.seed.
// `warm_start` overrides matching parameter tensors after seeded
// initialization (resume / fine-tune path).
TrainResult train(const data::Dataset& ds, const data::ExpressionMatrix& norm,
                  const std::vector<std::string>& train_wsis,
                  const std::vector<std::size_t>* seen_genes, const TrainConfig& cfg,
                  const num::ParamStore<float>* warm_start = nullptr);

// Checkpoint restore: model config + featurizer specs from the header,
// parameters (including trained featurizer tables) from the sections.
struct Restored {
  model::GeneQueryNet<float> net;
  feat::FeaturizerSpec gene_spec;
  feat::FeaturizerSpec img_spec;
  std::uint64_t train_seed = 0;
};

Restored restore_model(const Checkpoint& ckpt);

feat::GeneFeaturizer make_gene_featurizer(const feat::FeaturizerSpec& spec,
                                          const num::ParamStore<float>* trained = nullptr);
feat::ImageFeaturizer make_image_featurizer(const feat::FeaturizerSpec& spec,
                                            const data::Manifest& manifest,
                                            const num::ParamStore<float>* trained = nullptr);

}  // namespace gq::trainer
