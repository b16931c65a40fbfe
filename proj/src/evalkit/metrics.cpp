#include "genequery/evalkit/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "genequery/common.hpp"

namespace gq::eval {

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) fail(errc::argument, "pearson: length mismatch");
  if (x.size() < 2) fail(errc::argument, "pearson: need at least 2 samples");
  double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

GenePanels build_panels(const num::Tensor<double>& truth, std::size_t panel_size) {
  std::size_t n = truth.rows(), m = truth.cols();
  std::vector<std::pair<double, std::size_t>> by_mean(m), by_var(m);
  for (std::size_t j = 0; j < m; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += truth.at(i, j);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double d = truth.at(i, j) - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    by_mean[j] = {mean, j};
    by_var[j] = {var, j};
  }
  auto desc = [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  };
  std::sort(by_mean.begin(), by_mean.end(), desc);
  std::sort(by_var.begin(), by_var.end(), desc);

  GenePanels panels;
  std::size_t take = std::min(panel_size, m);
  for (std::size_t t = 0; t < take; ++t) {
    panels.heg.push_back(by_mean[t].second);
    panels.hvg.push_back(by_var[t].second);
  }
  panels.all.resize(m);
  for (std::size_t j = 0; j < m; ++j) panels.all[j] = j;
  return panels;
}

}  // namespace gq::eval
