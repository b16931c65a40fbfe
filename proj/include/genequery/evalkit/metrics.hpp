#pragma once

#include <optional>
#include <span>
#include <vector>

#include "genequery/numcore/tensor.hpp"

namespace gq::eval {

// Sample Pearson correlation. Returns nullopt when either side has zero
// variance (undefined, deliberately distinct from 0). Length < 2 is an
// argument error.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

struct GenePanels {
  std::vector<std::size_t> heg;  // top 50 by mean ground-truth expression
  std::vector<std::size_t> hvg;  // top 50 by ground-truth variance
  std::vector<std::size_t> all;
};

// Panels over the ground-truth normalized test matrix (rows = test spots,
// cols = library genes). Exact ties break toward the lower gene index.
GenePanels build_panels(const num::Tensor<double>& truth, std::size_t panel_size = 50);

}  // namespace gq::eval
