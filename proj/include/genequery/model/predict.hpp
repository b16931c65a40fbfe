#pragma once

#include <span>
#include <string>

#include "genequery/featurize/featurize.hpp"
#include "genequery/model/net.hpp"
#include "genequery/stdata/types.hpp"

namespace gq::model {

struct WsiPrediction {
  num::Tensor<float> preds;    // spots x queries
  num::Tensor<float> latents;  // spots x d_fuse (when requested)
};

// Featurizes one WSI's spots and the queried gene records, then runs the
// mode-appropriate forward with chunking. Queries may name genes absent from
// the library (the unseen-gene path) as long as the gene featurizer can
// resolve them from text.
WsiPrediction predict_wsi(const GeneQueryNet<float>& net, const feat::GeneFeaturizer& gene_f,
                          const feat::ImageFeaturizer& img_f, const data::Dataset& ds,
                          const std::string& wsi_id, std::span<const data::GeneRecord> queries,
                          bool want_latents = false);

}  // namespace gq::model
