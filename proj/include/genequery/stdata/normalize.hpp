#pragma once

#include <span>
#include <vector>

#include "genequery/stdata/types.hpp"

namespace gq::data {

// log1p then per-spot (row) min-max over genes; constant rows map to zeros.
// Input must be in raw state.
ExpressionMatrix normalize(const ExpressionMatrix& raw);

// Per WSI, the k genes with highest variance of log1p values across that
// WSI's spots; returns the union over WSIs, sorted ascending. Exact variance
// ties break toward the lower gene index.
std::vector<std::size_t> select_hvg(const ExpressionMatrix& raw, std::span<const RowRange> wsis,
                                    std::size_t k);

// Keep gene j iff it is expressed (value > 0) in at least `threshold` spots
// across all WSIs.
std::vector<std::size_t> filter_min_spots(const ExpressionMatrix& raw, std::size_t threshold);

}  // namespace gq::data
