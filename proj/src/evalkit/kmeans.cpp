#include "genequery/evalkit/kmeans.hpp"

#include <cmath>
#include <vector>

#include "genequery/common.hpp"
#include "genequery/numcore/prng.hpp"

namespace gq::eval {

namespace {

double sq_dist(const num::Tensor<float>& pts, std::size_t i, const std::vector<double>& center) {
  double d = 0.0;
  for (std::size_t c = 0; c < center.size(); ++c) {
    double diff = static_cast<double>(pts.at(i, c)) - center[c];
    d += diff * diff;
  }
  return d;
}

}  // namespace

std::vector<std::size_t> kmeans(const num::Tensor<float>& points, std::size_t k,
                                std::uint64_t seed) {
  std::size_t n = points.rows(), d = points.cols();
  if (k == 0) fail(errc::argument, "kmeans: k must be >= 1");
  if (k > n)
    fail(errc::argument, "kmeans: k " + std::to_string(k) + " exceeds point count " +
                             std::to_string(n));

  num::Rng rng(num::mix(seed, "kmeans"));
  std::vector<std::vector<double>> centers;
  centers.reserve(k);

  // k-means++: first center uniform, the rest proportional to squared
  // distance from the nearest chosen center.
  std::size_t first = static_cast<std::size_t>(rng.below(n));
  centers.emplace_back(points.data() + first * d, points.data() + (first + 1) * d);
  std::vector<double> dist(n);
  while (centers.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = sq_dist(points, i, centers[0]);
      for (std::size_t c = 1; c < centers.size(); ++c)
        best = std::min(best, sq_dist(points, i, centers[c]));
      dist[i] = best;
      total += best;
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      double r = rng.uniform() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += dist[i];
        if (acc >= r) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<std::size_t>(rng.below(n));
    }
    centers.emplace_back(points.data() + pick * d, points.data() + (pick + 1) * d);
  }

  std::vector<std::size_t> labels(n, 0);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = sq_dist(points, i, centers[0]);
      for (std::size_t c = 1; c < k; ++c) {
        double dd = sq_dist(points, i, centers[c]);
        if (dd < best_d) {
          best_d = dd;
          best = c;
        }
      }
      if (labels[i] != best) {
        labels[i] = best;
        changed = true;
      }
    }
    if (!changed && iter > 0) break;
    std::vector<std::vector<double>> sums(k, std::vector<double>(d, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[labels[i]];
      for (std::size_t c = 0; c < d; ++c) sums[labels[i]][c] += static_cast<double>(points.at(i, c));
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // empty cluster keeps its previous center
      for (std::size_t j = 0; j < d; ++j) centers[c][j] = sums[c][j] / static_cast<double>(counts[c]);
    }
  }
  return labels;
}

}  // namespace gq::eval
