#include "genequery/stdata/normalize.hpp"

#include <algorithm>
#include <cmath>

namespace gq::data {

ExpressionMatrix normalize(const ExpressionMatrix& raw) {
  if (raw.state() != ExprState::raw) fail(errc::state, "normalize: input already normalized");
  ExpressionMatrix out(raw.rows(), raw.cols(), ExprState::normalized);
  for (std::size_t r = 0; r < raw.rows(); ++r) {
    double lo = 0.0, hi = 0.0;
    for (std::size_t c = 0; c < raw.cols(); ++c) {
      double v = std::log1p(raw.cell(r, c));
      out.cell(r, c) = v;
      if (c == 0 || v < lo) lo = v;
      if (c == 0 || v > hi) hi = v;
    }
    double span = hi - lo;
    for (std::size_t c = 0; c < raw.cols(); ++c)
      out.cell(r, c) = span > 0.0 ? (out.cell(r, c) - lo) / span : 0.0;
  }
  return out;
}

std::vector<std::size_t> select_hvg(const ExpressionMatrix& raw, std::span<const RowRange> wsis,
                                    std::size_t k) {
  if (raw.state() != ExprState::raw) fail(errc::state, "select_hvg: raw expression required");
  if (k > raw.cols())
    fail(errc::argument, "select_hvg: k " + std::to_string(k) + " exceeds gene count " +
                             std::to_string(raw.cols()));
  std::vector<bool> keep(raw.cols(), false);
  std::vector<std::pair<double, std::size_t>> ranked(raw.cols());
  for (const auto& range : wsis) {
    for (std::size_t j = 0; j < raw.cols(); ++j) {
      double mean = 0.0;
      for (std::size_t i = 0; i < range.count; ++i) mean += std::log1p(raw.cell(range.begin + i, j));
      mean /= static_cast<double>(range.count);
      double var = 0.0;
      for (std::size_t i = 0; i < range.count; ++i) {
        double d = std::log1p(raw.cell(range.begin + i, j)) - mean;
        var += d * d;
      }
      var /= static_cast<double>(range.count);
      ranked[j] = {var, j};
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (std::size_t t = 0; t < k; ++t) keep[ranked[t].second] = true;
  }
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < keep.size(); ++j)
    if (keep[j]) out.push_back(j);
  return out;
}

std::vector<std::size_t> filter_min_spots(const ExpressionMatrix& raw, std::size_t threshold) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < raw.cols(); ++j) {
    std::size_t expressed = 0;
    for (std::size_t i = 0; i < raw.rows(); ++i)
      if (raw.cell(i, j) > 0.0) ++expressed;
    if (expressed >= threshold) out.push_back(j);
  }
  return out;
}

}  // namespace gq::data
