#pragma once

#include <string>
#include <vector>

#include "genequery/evalkit/metrics.hpp"
#include "genequery/featurize/featurize.hpp"
#include "genequery/model/net.hpp"
#include "genequery/stdata/types.hpp"

namespace gq::eval {

struct PanelStat {
  double mean_pcc = 0.0;
  std::size_t used = 0;      // genes contributing to the mean
  std::size_t excluded = 0;  // zero-variance genes dropped from the panel
  bool all_excluded = false;
};

struct EvalEntry {
  PanelStat heg, hvg, all;
  std::size_t scope_genes = 0;
};

struct PanelAggregate {
  double mean = 0.0;
  double var = 0.0;  // population variance across folds
  double sd = 0.0;
};

struct EvalReport {
  std::vector<EvalEntry> folds;
  PanelAggregate heg, hvg, all;
};

// Scoring core: per-gene PCC between pred column c and truth column scope[c]
// over aligned rows, averaged over panel ∩ scope with zero-variance genes
// excluded and counted. Panels come from the full truth matrix. `scope` must
// be sorted library gene indices.
EvalEntry score_predictions(const num::Tensor<double>& pred, const num::Tensor<double>& truth,
                            const std::vector<std::size_t>& scope);

// Per-gene PCC across all test spots (concatenated over test WSIs), averaged
// over panel ∩ scope. Zero-variance genes are excluded from means and
// counted. `scope` holds library gene indices (seen / unseen / all).
EvalEntry evaluate(const model::GeneQueryNet<float>& net, const feat::GeneFeaturizer& gene_f,
                   const feat::ImageFeaturizer& img_f, const data::Dataset& ds,
                   const data::ExpressionMatrix& norm, const std::vector<std::string>& test_wsis,
                   const std::vector<std::size_t>& scope);

// Arithmetic mean and population variance per panel across folds.
EvalReport aggregate_folds(std::vector<EvalEntry> entries);

// Evaluate an A-trained model on dataset B, restricted to the intersection of
// gene names; queries are featurized from B's metadata. Returns the entry and
// the evaluated B gene indices.
EvalEntry transfer_eval(const model::GeneQueryNet<float>& net, const feat::GeneFeaturizer& gene_f,
                        const feat::ImageFeaturizer& b_img_f, const data::GeneLibrary& train_genes,
                        const data::Dataset& b, const data::ExpressionMatrix& b_norm,
                        std::vector<std::size_t>* intersection_out = nullptr);

}  // namespace gq::eval
