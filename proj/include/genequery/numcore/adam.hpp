#pragma once

#include <cmath>
#include <map>
#include <string>

#include "genequery/numcore/params.hpp"
#include "genequery/numcore/tensor.hpp"

namespace gq::num {

template <typename T>
struct AdamConfig {
  T lr = T(1e-3);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
};

// Bias-corrected Adam. Moments are created lazily on the first step and keyed
// by parameter name; the step counter increments exactly once per step().
template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig<T> cfg = {}) : cfg_(cfg) {}

  std::uint64_t steps() const { return t_; }
  const AdamConfig<T>& config() const { return cfg_; }

  void step(ParamStore<T>& params) {
    ++t_;
    T bc1 = T(1) - std::pow(cfg_.beta1, static_cast<T>(t_));
    T bc2 = T(1) - std::pow(cfg_.beta2, static_cast<T>(t_));
    for (auto& [name, p] : params) {
      auto& m = moments_[name];
      if (m.m.size() == 0) {
        m.m = Tensor<T>(p.value.shape());
        m.v = Tensor<T>(p.value.shape());
      }
      if (!m.m.same_shape(p.grad))
        fail(errc::state, "adam: moment/gradient shape mismatch for " + name);
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        T g = p.grad[i];
        m.m[i] = cfg_.beta1 * m.m[i] + (T(1) - cfg_.beta1) * g;
        m.v[i] = cfg_.beta2 * m.v[i] + (T(1) - cfg_.beta2) * g * g;
        T mhat = m.m[i] / bc1;
        T vhat = m.v[i] / bc2;
        p.value[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

 private:
  struct Moments {
    Tensor<T> m;
    Tensor<T> v;
  };

  AdamConfig<T> cfg_;
  std::map<std::string, Moments> moments_;
  std::uint64_t t_ = 0;
};

}  // namespace gq::num
