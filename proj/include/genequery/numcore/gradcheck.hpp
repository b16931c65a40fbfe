#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "genequery/numcore/params.hpp"

namespace gq::num {

// Central finite-difference verification of reverse-mode gradients. `loss`
// must be a deterministic function of the parameter values; when called with
// want_grad=true it must also accumulate analytic gradients into the store
// (the store is zeroed here first). Returns the max over all parameter
// elements of |analytic - fd| / max(|analytic|, |fd|, 1e-8).
//
// Only meaningful at 64-bit: float round-off swamps an O(h^2) stencil.
inline double grad_check(const std::function<double(bool want_grad)>& loss,
                         ParamStore<double>& params, double h = 1e-4) {
  params.zero_grads();
  double base = loss(true);
  if (!std::isfinite(base)) fail(errc::numeric, "grad_check: non-finite loss");

  // Snapshot the analytic gradients before the FD sweep perturbs anything.
  ParamStore<double> analytic;
  for (const auto& [name, e] : params) analytic.add(name, e.grad);

  double worst = 0.0;
  for (auto& [name, e] : params) {
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      double saved = e.value[i];
      e.value[i] = saved + h;
      double up = loss(false);
      e.value[i] = saved - h;
      double dn = loss(false);
      e.value[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(dn))
        fail(errc::numeric, "grad_check: non-finite loss while perturbing " + name);
      double fd = (up - dn) / (2.0 * h);
      double a = analytic.value(name)[i];
      double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-8});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace gq::num
