#include "genequery/stdata/splits.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "genequery/numcore/prng.hpp"

namespace gq::data {

std::vector<Fold> make_wsi_folds(const std::vector<std::string>& wsi_ids, std::size_t n_folds,
                                 std::uint64_t seed) {
  if (n_folds < 2) fail(errc::argument, "make_wsi_folds: need at least 2 folds");
  if (n_folds > wsi_ids.size())
    fail(errc::argument, "make_wsi_folds: " + std::to_string(n_folds) + " folds exceed " +
                             std::to_string(wsi_ids.size()) + " WSIs");
  std::vector<std::string> shuffled = wsi_ids;
  num::Rng rng(num::mix(seed, "wsi_folds"));
  num::shuffle(shuffled, rng);

  std::vector<Fold> folds(n_folds);
  std::size_t base = shuffled.size() / n_folds;
  std::size_t extra = shuffled.size() % n_folds;
  std::size_t pos = 0;
  for (std::size_t f = 0; f < n_folds; ++f) {
    std::size_t take = base + (f < extra ? 1 : 0);
    for (std::size_t i = 0; i < take; ++i) folds[f].test_wsis.push_back(shuffled[pos + i]);
    pos += take;
  }
  for (std::size_t f = 0; f < n_folds; ++f) {
    for (const auto& id : wsi_ids) {
      if (std::find(folds[f].test_wsis.begin(), folds[f].test_wsis.end(), id) ==
          folds[f].test_wsis.end())
        folds[f].train_wsis.push_back(id);
    }
  }
  return folds;
}

GeneSplit make_gene_split(std::size_t m, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) fail(errc::argument, "make_gene_split: ratio must be in (0,1)");
  auto seen_count = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(m)));
  if (seen_count == 0 || seen_count >= m)
    fail(errc::argument, "make_gene_split: degenerate split (" + std::to_string(seen_count) +
                             " seen of " + std::to_string(m) + ")");
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t(0));
  num::Rng rng(num::mix(seed, "gene_split"));
  num::shuffle(order, rng);

  GeneSplit split;
  split.ratio = ratio;
  split.seen.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(seen_count));
  split.unseen.assign(order.begin() + static_cast<std::ptrdiff_t>(seen_count), order.end());
  std::sort(split.seen.begin(), split.seen.end());
  std::sort(split.unseen.begin(), split.unseen.end());
  return split;
}

}  // namespace gq::data
