#pragma once

#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "genequery/model/config.hpp"
#include "genequery/numcore/transformer.hpp"

namespace gq::model {

// Projections M_img/M_gene, L transformer blocks, and the per-position
// regressor R, in either sequencing mode. Parameters live in a name-keyed
// store; forwards are built on a tape so the same code serves training,
// inference and 64-bit gradient verification.
template <typename T>
struct GeneQueryNet {
  ModelConfig cfg;
  num::ParamStore<T> params;

  static std::string block_prefix(std::size_t l) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "blk%02zu", l);
    return buf;
  }

  static GeneQueryNet init(const ModelConfig& cfg) {
    cfg.validate();
    GeneQueryNet net;
    net.cfg = cfg;
    auto& ps = net.params;
    num::add_weight(ps, "proj_img.w", {cfg.img_in_dim, cfg.d_fuse}, cfg.seed);
    num::add_zeros(ps, "proj_img.b", {cfg.d_fuse});
    num::add_weight(ps, "proj_gene.w", {cfg.gene_in_dim, cfg.d_fuse}, cfg.seed);
    num::add_zeros(ps, "proj_gene.b", {cfg.d_fuse});
    for (std::size_t l = 0; l < cfg.layers; ++l)
      num::add_block_params(ps, block_prefix(l), cfg.d_fuse, cfg.seed);
    num::add_weight(ps, "reg.w", {cfg.d_fuse, 1}, cfg.seed);
    num::add_zeros(ps, "reg.b", {1});
    if (cfg.pos_embedding && cfg.mode == Mode::spot_aware) {
      num::add_weight(ps, "pos.x", {cfg.pos_table, cfg.d_fuse}, cfg.seed);
      num::add_weight(ps, "pos.y", {cfg.pos_table, cfg.d_fuse}, cfg.seed);
    }
    return net;
  }
};

template <typename T>
struct SeqOut {
  typename num::Tape<T>::Ref preds;   // seq x 1, one value per position
  typename num::Tape<T>::Ref h_last;  // seq x d_fuse, final block output
};

template <typename T>
typename num::Tape<T>::Ref project_img(num::Tape<T>& tape, const num::BoundParams<T>& bp,
                                       typename num::Tape<T>::Ref e_img) {
  return tape.affine(e_img, bp["proj_img.w"], bp["proj_img.b"]);
}

template <typename T>
typename num::Tape<T>::Ref project_gene(num::Tape<T>& tape, const num::BoundParams<T>& bp,
                                        typename num::Tape<T>::Ref e_gene) {
  return tape.affine(e_gene, bp["proj_gene.w"], bp["proj_gene.b"]);
}

// L blocks over the fused sequence, then the regressor per position.
template <typename T>
SeqOut<T> run_stack(num::Tape<T>& tape, const num::BoundParams<T>& bp, const ModelConfig& cfg,
                    typename num::Tape<T>::Ref joint, const std::vector<std::uint8_t>& mask) {
  auto h = joint;
  for (std::size_t l = 0; l < cfg.layers; ++l)
    h = num::transformer_block(tape, h, mask, num::bind_block(bp, GeneQueryNet<T>::block_prefix(l)),
                               cfg.heads);
  return {tape.affine(h, bp["reg.w"], bp["reg.b"]), h};
}

// Gene-aware sequencing: one spot as context, genes as the sequence. The
// joint representation is the broadcast sum h_img + h_gene_j per position.
template <typename T>
SeqOut<T> forward_gene_aware(num::Tape<T>& tape, const num::BoundParams<T>& bp,
                             const ModelConfig& cfg, typename num::Tape<T>::Ref h_img,
                             typename num::Tape<T>::Ref h_gene_seq,
                             const std::vector<std::uint8_t>& mask) {
  auto joint = tape.add_row_broadcast(h_gene_seq, h_img);
  return run_stack(tape, bp, cfg, joint, mask);
}

// Spot-aware sequencing: one gene as the query, a WSI's spots as the
// sequence; h_gene is broadcast-added to every spot row. Optional learned
// coordinate embeddings join here (spot-aware only).
template <typename T>
SeqOut<T> forward_spot_aware(num::Tape<T>& tape, const num::BoundParams<T>& bp,
                             const ModelConfig& cfg, typename num::Tape<T>::Ref h_img_seq,
                             typename num::Tape<T>::Ref h_gene,
                             const std::vector<std::uint8_t>& mask,
                             const std::vector<std::pair<int, int>>* coords = nullptr) {
  auto joint = tape.add_row_broadcast(h_img_seq, h_gene);
  if (cfg.pos_embedding) {
    if (!coords || coords->size() != tape.val(joint).rows())
      fail(errc::argument, "forward_spot_aware: coordinates required with pos_embedding");
    std::vector<std::size_t> xi, yi;
    xi.reserve(coords->size());
    yi.reserve(coords->size());
    for (auto [x, y] : *coords) {
      xi.push_back(static_cast<std::size_t>(x) % cfg.pos_table);
      yi.push_back(static_cast<std::size_t>(y) % cfg.pos_table);
    }
    joint = tape.add(joint, tape.gather_rows(bp["pos.x"], xi));
    joint = tape.add(joint, tape.gather_rows(bp["pos.y"], yi));
  }
  return run_stack(tape, bp, cfg, joint, mask);
}

// Forward-only prediction over full inputs with chunking by max_len. e_img is
// n x img_in_dim, e_gene is k x gene_in_dim; returns the n x k prediction
// matrix and (optionally) one d_fuse latent per spot: gene-aware latents are
// the mean of h_last over gene positions in the spot's pass, spot-aware
// latents the mean over gene queries of h_last at the spot's position.
template <typename T>
struct PredictOut {
  num::Tensor<T> preds;    // n_spots x n_genes
  num::Tensor<T> latents;  // n_spots x d_fuse (when requested)
};

template <typename T>
PredictOut<T> predict_matrix(const GeneQueryNet<T>& net, const num::Tensor<T>& e_img,
                             const num::Tensor<T>& e_gene,
                             const std::vector<std::pair<int, int>>* coords = nullptr,
                             bool want_latents = false) {
  const auto& cfg = net.cfg;
  std::size_t n = e_img.rows(), k = e_gene.rows();
  std::size_t cap = cfg.resolved_max_len();
  PredictOut<T> out;
  out.preds = num::Tensor<T>({n, k});
  if (want_latents) out.latents = num::Tensor<T>({n, cfg.d_fuse});

  auto slice_rows = [](const num::Tensor<T>& m, std::size_t r0, std::size_t r1) {
    num::Tensor<T> s({r1 - r0, m.cols()});
    for (std::size_t r = r0; r < r1; ++r)
      for (std::size_t c = 0; c < m.cols(); ++c) s.at(r - r0, c) = m.at(r, c);
    return s;
  };

  if (cfg.mode == Mode::gene_aware) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t g0 = 0; g0 < k; g0 += cap) {
        std::size_t g1 = std::min(k, g0 + cap);
        num::Tape<T> tape;
        num::BoundParams<T> bp(tape, net.params);
        auto h_img = project_img(tape, bp, tape.input(slice_rows(e_img, i, i + 1)));
        auto h_genes = project_gene(tape, bp, tape.input(slice_rows(e_gene, g0, g1)));
        auto res = forward_gene_aware(tape, bp, cfg, h_img, h_genes, {});
        const auto& p = tape.val(res.preds);
        for (std::size_t j = g0; j < g1; ++j) out.preds.at(i, j) = p[j - g0];
        if (want_latents) {
          const auto& h = tape.val(res.h_last);
          for (std::size_t r = 0; r < h.rows(); ++r)
            for (std::size_t c = 0; c < cfg.d_fuse; ++c) out.latents.at(i, c) += h.at(r, c);
        }
      }
      if (want_latents)
        for (std::size_t c = 0; c < cfg.d_fuse; ++c) out.latents.at(i, c) /= static_cast<T>(k);
    }
  } else {
    for (std::size_t j = 0; j < k; ++j) {
      for (std::size_t s0 = 0; s0 < n; s0 += cap) {
        std::size_t s1 = std::min(n, s0 + cap);
        num::Tape<T> tape;
        num::BoundParams<T> bp(tape, net.params);
        auto h_imgs = project_img(tape, bp, tape.input(slice_rows(e_img, s0, s1)));
        auto h_gene = project_gene(tape, bp, tape.input(slice_rows(e_gene, j, j + 1)));
        std::vector<std::pair<int, int>> chunk_coords;
        if (coords)
          chunk_coords.assign(coords->begin() + static_cast<std::ptrdiff_t>(s0),
                              coords->begin() + static_cast<std::ptrdiff_t>(s1));
        auto res = forward_spot_aware(tape, bp, cfg, h_imgs, h_gene, {},
                                      coords ? &chunk_coords : nullptr);
        const auto& p = tape.val(res.preds);
        for (std::size_t i = s0; i < s1; ++i) out.preds.at(i, j) = p[i - s0];
        if (want_latents) {
          const auto& h = tape.val(res.h_last);
          for (std::size_t i = s0; i < s1; ++i)
            for (std::size_t c = 0; c < cfg.d_fuse; ++c) out.latents.at(i, c) += h.at(i - s0, c);
        }
      }
    }
    if (want_latents)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < cfg.d_fuse; ++c) out.latents.at(i, c) /= static_cast<T>(k);
  }
  return out;
}

}  // namespace gq::model
