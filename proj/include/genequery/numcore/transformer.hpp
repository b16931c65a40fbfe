#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "genequery/numcore/params.hpp"
#include "genequery/numcore/prng.hpp"
#include "genequery/numcore/tape.hpp"

namespace gq::num {

inline constexpr double kLayerNormEps = 1e-5;

template <typename T>
Tensor<T> normal_init(std::vector<std::size_t> shape, std::uint64_t seed, double sd) {
  Rng rng(seed);
  Tensor<T> t(std::move(shape));
  for (auto& v : t) v = static_cast<T>(rng.normal(0.0, sd));
  return t;
}

// Initialization rule for every named parameter: weights ~ normal(0, 0.02)
// from Rng(mix(seed, fnv1a64(name))), biases zero, layer-norm gain one. Being
// keyed by name makes initialization independent of creation order.
template <typename T>
void add_weight(ParamStore<T>& ps, const std::string& name, std::vector<std::size_t> shape,
                std::uint64_t seed) {
  ps.add(name, normal_init<T>(std::move(shape), mix(seed, name), 0.02));
}

template <typename T>
void add_zeros(ParamStore<T>& ps, const std::string& name, std::vector<std::size_t> shape) {
  ps.add(name, Tensor<T>(std::move(shape)));
}

template <typename T>
void add_ones(ParamStore<T>& ps, const std::string& name, std::vector<std::size_t> shape) {
  ps.add(name, Tensor<T>::full(std::move(shape), T(1)));
}

template <typename T>
struct AttnRefs {
  typename Tape<T>::Ref wq, bq, wk, bk, wv, bv, wo, bo;
};

template <typename T>
struct BlockRefs {
  typename Tape<T>::Ref ln1_g, ln1_b;
  AttnRefs<T> attn;
  typename Tape<T>::Ref ln2_g, ln2_b, mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

// Test hook: captures the post-softmax attention weights per head.
template <typename T>
struct AttnProbe {
  std::vector<Tensor<T>> head_weights;
};

template <typename T>
void add_attn_params(ParamStore<T>& ps, const std::string& prefix, std::size_t d, std::uint64_t seed) {
  for (const char* w : {".attn.wq", ".attn.wk", ".attn.wv", ".attn.wo"})
    add_weight(ps, prefix + w, {d, d}, seed);
  for (const char* b : {".attn.bq", ".attn.bk", ".attn.bv", ".attn.bo"})
    add_zeros(ps, prefix + b, {d});
}

template <typename T>
void add_block_params(ParamStore<T>& ps, const std::string& prefix, std::size_t d, std::uint64_t seed) {
  add_ones(ps, prefix + ".ln1.g", {d});
  add_zeros(ps, prefix + ".ln1.b", {d});
  add_attn_params(ps, prefix, d, seed);
  add_ones(ps, prefix + ".ln2.g", {d});
  add_zeros(ps, prefix + ".ln2.b", {d});
  add_weight(ps, prefix + ".mlp.w1", {d, 4 * d}, seed);
  add_zeros(ps, prefix + ".mlp.b1", {4 * d});
  add_weight(ps, prefix + ".mlp.w2", {4 * d, d}, seed);
  add_zeros(ps, prefix + ".mlp.b2", {d});
}

template <typename T>
AttnRefs<T> bind_attn(const BoundParams<T>& bp, const std::string& prefix) {
  return {bp[prefix + ".attn.wq"], bp[prefix + ".attn.bq"], bp[prefix + ".attn.wk"],
          bp[prefix + ".attn.bk"], bp[prefix + ".attn.wv"], bp[prefix + ".attn.bv"],
          bp[prefix + ".attn.wo"], bp[prefix + ".attn.bo"]};
}

template <typename T>
BlockRefs<T> bind_block(const BoundParams<T>& bp, const std::string& prefix) {
  BlockRefs<T> r;
  r.ln1_g = bp[prefix + ".ln1.g"];
  r.ln1_b = bp[prefix + ".ln1.b"];
  r.attn = bind_attn(bp, prefix);
  r.ln2_g = bp[prefix + ".ln2.g"];
  r.ln2_b = bp[prefix + ".ln2.b"];
  r.mlp_w1 = bp[prefix + ".mlp.w1"];
  r.mlp_b1 = bp[prefix + ".mlp.b1"];
  r.mlp_w2 = bp[prefix + ".mlp.w2"];
  r.mlp_b2 = bp[prefix + ".mlp.b2"];
  return r;
}

// Scaled dot-product attention over the sequence rows of x (seq x d). `mask`
// marks valid positions (empty = all valid); masked positions get attention
// weight exactly 0 from every query. No positional encoding, so the op is
// permutation-equivariant.
template <typename T>
typename Tape<T>::Ref multi_head_attention(Tape<T>& tape, typename Tape<T>::Ref x,
                                           const std::vector<std::uint8_t>& mask,
                                           const AttnRefs<T>& p, std::size_t heads,
                                           AttnProbe<T>* probe = nullptr) {
  std::size_t d = tape.val(x).cols();
  if (heads == 0 || d % heads != 0)
    fail(errc::config, "multi_head_attention: dim " + std::to_string(d) +
                           " not divisible by head count " + std::to_string(heads));
  std::size_t dh = d / heads;
  T scale = T(1) / std::sqrt(static_cast<T>(dh));
  auto q = tape.affine(x, p.wq, p.bq);
  auto k = tape.affine(x, p.wk, p.bk);
  auto v = tape.affine(x, p.wv, p.bv);
  std::vector<typename Tape<T>::Ref> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    auto qh = tape.slice_cols(q, h * dh, (h + 1) * dh);
    auto kh = tape.slice_cols(k, h * dh, (h + 1) * dh);
    auto vh = tape.slice_cols(v, h * dh, (h + 1) * dh);
    auto scores = tape.scale(tape.matmul_nt(qh, kh), scale);
    auto w = tape.softmax_rows(scores, mask);
    if (probe) probe->head_weights.push_back(tape.val(w));
    outs.push_back(tape.matmul(w, vh));
  }
  auto concat = heads == 1 ? outs[0] : tape.concat_cols(outs);
  return tape.affine(concat, p.wo, p.bo);
}

// Pre-norm residual block: x + MHA(LN(x)), then x + MLP(LN(x)) with a 4x
// hidden GELU MLP. With zeroed output projections both branches vanish and
// the block is the identity map.
template <typename T>
typename Tape<T>::Ref transformer_block(Tape<T>& tape, typename Tape<T>::Ref x,
                                        const std::vector<std::uint8_t>& mask,
                                        const BlockRefs<T>& p, std::size_t heads,
                                        AttnProbe<T>* probe = nullptr) {
  auto a = tape.layer_norm_rows(x, p.ln1_g, p.ln1_b, static_cast<T>(kLayerNormEps));
  auto x1 = tape.add(x, multi_head_attention(tape, a, mask, p.attn, heads, probe));
  auto m = tape.layer_norm_rows(x1, p.ln2_g, p.ln2_b, static_cast<T>(kLayerNormEps));
  auto hidden = tape.gelu(tape.affine(m, p.mlp_w1, p.mlp_b1));
  return tape.add(x1, tape.affine(hidden, p.mlp_w2, p.mlp_b2));
}

}  // namespace gq::num
