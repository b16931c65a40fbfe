#include "genequery/model/predict.hpp"

namespace gq::model {

WsiPrediction predict_wsi(const GeneQueryNet<float>& net, const feat::GeneFeaturizer& gene_f,
                          const feat::ImageFeaturizer& img_f, const data::Dataset& ds,
                          const std::string& wsi_id, std::span<const data::GeneRecord> queries,
                          bool want_latents) {
  auto range = ds.rows_of(wsi_id);
  num::Tensor<float> e_img({range.count, img_f.dim()});
  std::vector<std::pair<int, int>> coords(range.count);
  for (std::size_t i = 0; i < range.count; ++i) {
    const auto& spot = ds.spots[range.begin + i];
    auto v = img_f.encode(spot);
    for (std::size_t c = 0; c < v.size(); ++c) e_img.at(i, c) = v[c];
    coords[i] = {spot.x, spot.y};
  }
  num::Tensor<float> e_gene({queries.size(), gene_f.dim()});
  for (std::size_t j = 0; j < queries.size(); ++j) {
    auto v = gene_f.encode(queries[j]);
    for (std::size_t c = 0; c < v.size(); ++c) e_gene.at(j, c) = v[c];
  }
  auto out = predict_matrix(net, e_img, e_gene, net.cfg.pos_embedding ? &coords : nullptr,
                            want_latents);
  if (!out.preds.all_finite()) fail(errc::numeric, "non-finite predictions for wsi " + wsi_id);
  return {std::move(out.preds), std::move(out.latents)};
}

}  // namespace gq::model
