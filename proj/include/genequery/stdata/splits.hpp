#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "genequery/stdata/types.hpp"

namespace gq::data {

struct Fold {
  std::vector<std::string> train_wsis;
  std::vector<std::string> test_wsis;
};

struct GeneSplit {
  std::vector<std::size_t> seen;
  std::vector<std::size_t> unseen;
  double ratio = 0.0;
};

struct SplitPlan {
  std::vector<Fold> folds;
  GeneSplit gene_split;
  std::uint64_t seed = 0;
};

// Deterministic shuffle of the WSI ids by seed, then a contiguous partition
// into n_folds test groups; every WSI tests in exactly one fold.
std::vector<Fold> make_wsi_folds(const std::vector<std::string>& wsi_ids, std::size_t n_folds,
                                 std::uint64_t seed);

// seen count = round(ratio * m); disjoint and exhaustive, deterministic by
// seed. Degenerate splits (0 seen or 0 unseen) are argument errors.
GeneSplit make_gene_split(std::size_t m, double ratio, std::uint64_t seed);

}  // namespace gq::data
