#include "genequery/evalkit/evaluate.hpp"

#include <algorithm>
#include <cmath>

#include "genequery/model/predict.hpp"

namespace gq::eval {

namespace {

PanelStat panel_stat(const std::vector<std::size_t>& panel, const std::vector<std::size_t>& scope,
                     const std::vector<std::optional<double>>& pcc_by_gene) {
  PanelStat stat;
  double sum = 0.0;
  for (std::size_t j : panel) {
    if (!std::binary_search(scope.begin(), scope.end(), j)) continue;
    const auto& p = pcc_by_gene[j];
    if (!p.has_value()) {
      ++stat.excluded;
      continue;
    }
    sum += *p;
    ++stat.used;
  }
  if (stat.used == 0) {
    stat.all_excluded = true;
    stat.mean_pcc = 0.0;
  } else {
    stat.mean_pcc = sum / static_cast<double>(stat.used);
  }
  return stat;
}

}  // namespace

EvalEntry score_predictions(const num::Tensor<double>& pred, const num::Tensor<double>& truth,
                            const std::vector<std::size_t>& scope) {
  if (pred.rows() != truth.rows()) fail(errc::shape, "score_predictions: row mismatch");
  if (pred.cols() != scope.size()) fail(errc::shape, "score_predictions: scope width mismatch");

  std::vector<std::optional<double>> pcc_by_gene(truth.cols());
  std::vector<double> px(pred.rows()), py(pred.rows());
  for (std::size_t c = 0; c < scope.size(); ++c) {
    for (std::size_t i = 0; i < pred.rows(); ++i) {
      px[i] = pred.at(i, c);
      py[i] = truth.at(i, scope[c]);
    }
    pcc_by_gene[scope[c]] = pearson(px, py);
  }

  auto panels = build_panels(truth);
  EvalEntry entry;
  entry.scope_genes = scope.size();
  entry.heg = panel_stat(panels.heg, scope, pcc_by_gene);
  entry.hvg = panel_stat(panels.hvg, scope, pcc_by_gene);
  entry.all = panel_stat(panels.all, scope, pcc_by_gene);
  return entry;
}

EvalEntry evaluate(const model::GeneQueryNet<float>& net, const feat::GeneFeaturizer& gene_f,
                   const feat::ImageFeaturizer& img_f, const data::Dataset& ds,
                   const data::ExpressionMatrix& norm, const std::vector<std::string>& test_wsis,
                   const std::vector<std::size_t>& scope) {
  if (norm.state() != data::ExprState::normalized)
    fail(errc::state, "evaluate: normalized expression required");
  if (scope.empty()) fail(errc::argument, "evaluate: empty gene scope");
  std::vector<std::size_t> sorted_scope = scope;
  std::sort(sorted_scope.begin(), sorted_scope.end());

  // Concatenated test rows in the given WSI order.
  std::vector<std::size_t> rows;
  for (const auto& wsi : test_wsis) {
    auto range = ds.rows_of(wsi);
    for (std::size_t i = 0; i < range.count; ++i) rows.push_back(range.begin + i);
  }
  if (rows.size() < 2) fail(errc::argument, "evaluate: need at least 2 test spots");

  num::Tensor<double> truth({rows.size(), ds.n_genes()});
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < ds.n_genes(); ++j) truth.at(i, j) = norm.cell(rows[i], j);

  // Predictions for scope genes over the same concatenated rows.
  std::vector<data::GeneRecord> queries;
  for (std::size_t j : sorted_scope) queries.push_back(ds.genes.record(j));
  num::Tensor<double> pred({rows.size(), sorted_scope.size()});
  std::size_t row0 = 0;
  for (const auto& wsi : test_wsis) {
    auto p = model::predict_wsi(net, gene_f, img_f, ds, wsi, queries);
    for (std::size_t i = 0; i < p.preds.rows(); ++i)
      for (std::size_t c = 0; c < sorted_scope.size(); ++c)
        pred.at(row0 + i, c) = static_cast<double>(p.preds.at(i, c));
    row0 += p.preds.rows();
  }

  return score_predictions(pred, truth, sorted_scope);
}

EvalReport aggregate_folds(std::vector<EvalEntry> entries) {
  if (entries.empty()) fail(errc::argument, "aggregate_folds: no entries");
  EvalReport report;
  report.folds = std::move(entries);
  auto agg = [&](auto pick) {
    PanelAggregate a;
    double n = static_cast<double>(report.folds.size());
    for (const auto& e : report.folds) a.mean += pick(e).mean_pcc;
    a.mean /= n;
    for (const auto& e : report.folds) {
      double d = pick(e).mean_pcc - a.mean;
      a.var += d * d;
    }
    a.var /= n;
    a.sd = std::sqrt(a.var);
    return a;
  };
  report.heg = agg([](const EvalEntry& e) -> const PanelStat& { return e.heg; });
  report.hvg = agg([](const EvalEntry& e) -> const PanelStat& { return e.hvg; });
  report.all = agg([](const EvalEntry& e) -> const PanelStat& { return e.all; });
  return report;
}

EvalEntry transfer_eval(const model::GeneQueryNet<float>& net, const feat::GeneFeaturizer& gene_f,
                        const feat::ImageFeaturizer& b_img_f, const data::GeneLibrary& train_genes,
                        const data::Dataset& b, const data::ExpressionMatrix& b_norm,
                        std::vector<std::size_t>* intersection_out) {
  std::vector<std::size_t> intersection;
  for (std::size_t j = 0; j < b.n_genes(); ++j)
    if (train_genes.index_of(b.genes.record(j).name)) intersection.push_back(j);
  if (intersection.empty())
    fail(errc::argument, "transfer_eval: no gene names shared between datasets");
  if (intersection_out) *intersection_out = intersection;
  return evaluate(net, gene_f, b_img_f, b, b_norm, b.manifest.wsi_ids, intersection);
}

}  // namespace gq::eval
