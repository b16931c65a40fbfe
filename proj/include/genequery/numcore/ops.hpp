#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "genequery/common.hpp"

namespace gq::num {

// Numerically stable softmax over the valid entries of x; invalid entries get
// probability exactly 0. `valid` may be empty, meaning every entry is valid.
template <typename T>
void softmax_masked(std::span<const T> x, std::span<const std::uint8_t> valid, std::span<T> out) {
  T hi = T(0);
  bool any = false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!valid.empty() && !valid[i]) continue;
    if (!std::isfinite(static_cast<double>(x[i]))) fail(errc::numeric, "softmax: non-finite input");
    if (!any || x[i] > hi) hi = x[i];
    any = true;
  }
  if (!any) fail(errc::argument, "softmax: no valid entries");
  T denom = T(0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!valid.empty() && !valid[i]) {
      out[i] = T(0);
      continue;
    }
    out[i] = std::exp(x[i] - hi);
    denom += out[i];
  }
  for (std::size_t i = 0; i < x.size(); ++i) out[i] /= denom;
}

template <typename T>
std::vector<T> softmax(const std::vector<T>& x) {
  std::vector<T> out(x.size());
  softmax_masked<T>(x, {}, out);
  return out;
}

// Per-vector layer norm: y = gamma * (x - mean) / sqrt(var + eps) + beta,
// with population variance over the vector.
template <typename T>
std::vector<T> layer_norm(const std::vector<T>& x, const std::vector<T>& gamma,
                          const std::vector<T>& beta, T eps) {
  if (gamma.size() != x.size() || beta.size() != x.size()) {
    fail(errc::shape, "layer_norm: gamma/beta length " + std::to_string(gamma.size()) + "/" +
                          std::to_string(beta.size()) + " vs input length " + std::to_string(x.size()));
  }
  if (!(eps > T(0))) fail(errc::argument, "layer_norm: eps must be > 0");
  T mean = T(0);
  for (T v : x) mean += v;
  mean /= static_cast<T>(x.size());
  T var = T(0);
  for (T v : x) var += (v - mean) * (v - mean);
  var /= static_cast<T>(x.size());
  T inv = T(1) / std::sqrt(var + eps);
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = gamma[i] * (x[i] - mean) * inv + beta[i];
  return out;
}

template <typename T>
T gelu_scalar(T x) {
  return T(0.5) * x * (T(1) + std::erf(x * T(0.7071067811865476)));
}

template <typename T>
T gelu_grad_scalar(T x) {
  T cdf = T(0.5) * (T(1) + std::erf(x * T(0.7071067811865476)));
  T pdf = std::exp(T(-0.5) * x * x) * T(0.3989422804014327);
  return cdf + x * pdf;
}

// c (n x m) += a (n x k) * b (k x m)
template <typename T>
void matmul_acc(const T* a, const T* b, T* c, std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const T* ai = a + i * k;
    T* ci = c + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      T av = ai[p];
      const T* bp = b + p * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += av * bp[j];
    }
  }
}

// c (n x m) += a (n x k) * b (m x k)^T
template <typename T>
void matmul_nt_acc(const T* a, const T* b, T* c, std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const T* ai = a + i * k;
    for (std::size_t j = 0; j < m; ++j) {
      const T* bj = b + j * k;
      T dot = T(0);
      for (std::size_t p = 0; p < k; ++p) dot += ai[p] * bj[p];
      c[i * m + j] += dot;
    }
  }
}

// c (n x m) += a (k x n)^T * b (k x m)
template <typename T>
void matmul_tn_acc(const T* a, const T* b, T* c, std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t p = 0; p < k; ++p) {
    const T* ap = a + p * n;
    const T* bp = b + p * m;
    for (std::size_t i = 0; i < n; ++i) {
      T av = ap[i];
      T* ci = c + i * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += av * bp[j];
    }
  }
}

}  // namespace gq::num
