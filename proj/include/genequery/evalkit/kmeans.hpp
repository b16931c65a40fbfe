#pragma once

#include <cstdint>
#include <vector>

#include "genequery/numcore/tensor.hpp"

namespace gq::eval {

// Seeded k-means over row vectors: k-means++ initialization from the named
// PRNG, at most 100 Lloyd iterations, deterministic tie-breaks (lower center
// index wins). k > point count is an argument error.
std::vector<std::size_t> kmeans(const num::Tensor<float>& points, std::size_t k,
                                std::uint64_t seed);

}  // namespace gq::eval
