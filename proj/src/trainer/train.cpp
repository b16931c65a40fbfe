#include "genequery/trainer/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "genequery/numcore/adam.hpp"
#include "genequery/numcore/prng.hpp"

namespace gq::trainer {

namespace {

using Tape = num::Tape<float>;
using Bound = num::BoundParams<float>;
using Ref = Tape::Ref;

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Everything a training step needs about the inputs, featurized once up
// front. Trainable featurizers keep their raw inputs (bucket lists, patch
// planes) so gradients can flow into the tables.
struct Prepared {
  std::vector<std::size_t> gene_idx;                    // library indices in training scope
  num::Tensor<float> e_gene;                            // scope x gene_in (frozen path)
  std::vector<std::vector<std::size_t>> gene_buckets;   // trainable path
  bool gene_trainable = false;

  std::vector<std::size_t> rows;                        // global spot rows, train WSIs
  std::vector<std::size_t> row_wsi;                     // wsi index per entry of `rows`
  num::Tensor<float> e_img;                             // rows x img_in (frozen path)
  std::vector<num::Tensor<float>> patch_planes;         // trainable tiny_conv path
  std::vector<std::pair<int, int>> coords;
  bool img_trainable = false;
  std::size_t n_wsis = 0;
};

Ref gene_rows_node(Tape& tape, const Bound& bp, const Prepared& prep, std::size_t g0,
                   std::size_t g1) {
  if (prep.gene_trainable) {
    std::vector<std::vector<std::size_t>> lists(
        prep.gene_buckets.begin() + static_cast<std::ptrdiff_t>(g0),
        prep.gene_buckets.begin() + static_cast<std::ptrdiff_t>(g1));
    return tape.embed_bag(bp["feat_gene.emb"], std::move(lists));
  }
  num::Tensor<float> rows({g1 - g0, prep.e_gene.cols()});
  for (std::size_t g = g0; g < g1; ++g)
    for (std::size_t c = 0; c < prep.e_gene.cols(); ++c) rows.at(g - g0, c) = prep.e_gene.at(g, c);
  return tape.input(std::move(rows));
}

Ref conv_feature_node(Tape& tape, const Bound& bp, const num::Tensor<float>& planes) {
  auto c1 = tape.relu(tape.conv2d(tape.input(planes), bp["feat_img.c1.w"], bp["feat_img.c1.b"], 2, 1));
  auto c2 = tape.relu(tape.conv2d(c1, bp["feat_img.c2.w"], bp["feat_img.c2.b"], 2, 1));
  return tape.global_mean_pool(c2);
}

// Image rows for items [i0, i1) of prep.rows.
Ref img_rows_node(Tape& tape, const Bound& bp, const Prepared& prep, std::size_t i0,
                  std::size_t i1) {
  if (prep.img_trainable) {
    std::vector<Ref> rows;
    rows.reserve(i1 - i0);
    for (std::size_t i = i0; i < i1; ++i)
      rows.push_back(conv_feature_node(tape, bp, prep.patch_planes[i]));
    return rows.size() == 1 ? rows[0] : tape.stack_rows(rows);
  }
  num::Tensor<float> rows({i1 - i0, prep.e_img.cols()});
  for (std::size_t i = i0; i < i1; ++i)
    for (std::size_t c = 0; c < prep.e_img.cols(); ++c) rows.at(i - i0, c) = prep.e_img.at(i, c);
  return tape.input(std::move(rows));
}

struct ItemLoss {
  double se = 0.0;
  std::size_t cells = 0;
};

// One gene-aware item: every scope gene queried against one spot, chunked by
// max_len. Accumulates parameter gradients of the squared-error sum when
// want_grad is set.
ItemLoss gene_aware_item(const model::GeneQueryNet<float>& net, const Prepared& prep,
                         const data::ExpressionMatrix& norm, std::size_t item, bool want_grad,
                         num::ParamStore<float>& grads_into) {
  std::size_t row = prep.rows[item];
  std::size_t cap = net.cfg.resolved_max_len();
  std::size_t k = prep.gene_idx.size();
  ItemLoss out;
  for (std::size_t g0 = 0; g0 < k; g0 += cap) {
    std::size_t g1 = std::min(k, g0 + cap);
    Tape tape;
    Bound bp(tape, net.params);
    auto h_img = model::project_img(tape, bp, img_rows_node(tape, bp, prep, item, item + 1));
    auto h_genes = model::project_gene(tape, bp, gene_rows_node(tape, bp, prep, g0, g1));
    auto res = model::forward_gene_aware(tape, bp, net.cfg, h_img, h_genes, {});
    num::Tensor<float> truth({g1 - g0});
    for (std::size_t g = g0; g < g1; ++g)
      truth[g - g0] = static_cast<float>(norm.at(row, prep.gene_idx[g]));
    auto sq = tape.sq_err_sum(res.preds, std::move(truth));
    double v = static_cast<double>(tape.val(sq)[0]);
    if (!std::isfinite(v)) fail(errc::numeric, "non-finite loss");
    if (want_grad) {
      tape.backward(sq);
      bp.accumulate_grads(tape, grads_into);
    }
    out.se += v;
    out.cells += g1 - g0;
  }
  return out;
}

// One spot-aware item: one gene queried against a WSI's spot sequence,
// chunked by max_len. `items` lists indices into prep.rows for that WSI.
ItemLoss spot_aware_item(const model::GeneQueryNet<float>& net, const Prepared& prep,
                         const data::ExpressionMatrix& norm, std::size_t wsi_first,
                         std::size_t wsi_count, std::size_t gene_pos, bool want_grad,
                         num::ParamStore<float>& grads_into) {
  std::size_t cap = net.cfg.resolved_max_len();
  std::size_t j = prep.gene_idx[gene_pos];
  ItemLoss out;
  for (std::size_t s0 = 0; s0 < wsi_count; s0 += cap) {
    std::size_t s1 = std::min(wsi_count, s0 + cap);
    Tape tape;
    Bound bp(tape, net.params);
    auto h_imgs = model::project_img(
        tape, bp, img_rows_node(tape, bp, prep, wsi_first + s0, wsi_first + s1));
    auto h_gene = model::project_gene(tape, bp, gene_rows_node(tape, bp, prep, gene_pos, gene_pos + 1));
    std::vector<std::pair<int, int>> coords;
    if (net.cfg.pos_embedding)
      coords.assign(prep.coords.begin() + static_cast<std::ptrdiff_t>(wsi_first + s0),
                    prep.coords.begin() + static_cast<std::ptrdiff_t>(wsi_first + s1));
    auto res = model::forward_spot_aware(tape, bp, net.cfg, h_imgs, h_gene, {},
                                         net.cfg.pos_embedding ? &coords : nullptr);
    num::Tensor<float> truth({s1 - s0});
    for (std::size_t s = s0; s < s1; ++s)
      truth[s - s0] = static_cast<float>(norm.at(prep.rows[wsi_first + s], j));
    auto sq = tape.sq_err_sum(res.preds, std::move(truth));
    double v = static_cast<double>(tape.val(sq)[0]);
    if (!std::isfinite(v)) fail(errc::numeric, "non-finite loss");
    if (want_grad) {
      tape.backward(sq);
      bp.accumulate_grads(tape, grads_into);
    }
    out.se += v;
    out.cells += s1 - s0;
  }
  return out;
}

std::string feat_header(const feat::FeaturizerSpec& s) {
  return feat::feat_kind_name(s.kind) + "," + std::to_string(s.output_dim) + "," +
         std::to_string(s.vocab_buckets) + "," + (s.trainable ? "1" : "0") + "," +
         std::to_string(s.seed) + "," + s.source;
}

feat::FeaturizerSpec feat_from_header(const std::string& line) {
  feat::FeaturizerSpec s;
  std::vector<std::string> cells;
  std::size_t start = 0;
  for (int i = 0; i < 5; ++i) {
    auto comma = line.find(',', start);
    if (comma == std::string::npos) fail(errc::data, "checkpoint: malformed featurizer spec");
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  cells.push_back(line.substr(start));
  s.kind = feat::feat_kind_from(cells[0]);
  s.output_dim = std::stoul(cells[1]);
  s.vocab_buckets = std::stoul(cells[2]);
  s.trainable = cells[3] == "1";
  s.seed = std::stoull(cells[4]);
  s.source = cells[5];
  return s;
}

}  // namespace

double mse_loss(const num::Tensor<float>& pred, const num::Tensor<float>& truth,
                const std::vector<std::uint8_t>& mask) {
  if (!pred.same_shape(truth)) fail(errc::shape, "mse_loss: shape mismatch");
  if (!mask.empty() && mask.size() != pred.size()) fail(errc::shape, "mse_loss: mask mismatch");
  double se = 0.0;
  std::size_t cells = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    double d = static_cast<double>(pred[i]) - static_cast<double>(truth[i]);
    se += d * d;
    ++cells;
  }
  if (cells == 0) fail(errc::argument, "mse_loss: zero valid cells");
  return se / static_cast<double>(cells);
}

feat::GeneFeaturizer make_gene_featurizer(const feat::FeaturizerSpec& spec,
                                          const num::ParamStore<float>* trained) {
  auto g = feat::GeneFeaturizer::make(spec);
  if (trained && trained->has("feat_gene.emb")) g.set_embedding_table(trained->value("feat_gene.emb"));
  return g;
}

feat::ImageFeaturizer make_image_featurizer(const feat::FeaturizerSpec& spec,
                                            const data::Manifest& manifest,
                                            const num::ParamStore<float>* trained) {
  auto im = feat::ImageFeaturizer::make(spec, manifest);
  if (trained && trained->has("feat_img.c1.w"))
    im.set_conv_params(trained->value("feat_img.c1.w"), trained->value("feat_img.c1.b"),
                       trained->value("feat_img.c2.w"), trained->value("feat_img.c2.b"));
  return im;
}

TrainResult train(const data::Dataset& ds, const data::ExpressionMatrix& norm,
                  const std::vector<std::string>& train_wsis,
                  const std::vector<std::size_t>* seen_genes, const TrainConfig& cfg,
                  const num::ParamStore<float>* warm_start) {
  cfg.validate();
  if (norm.state() != data::ExprState::normalized)
    fail(errc::state, "train: normalized expression required");
  if (train_wsis.empty()) fail(errc::argument, "train: no training WSIs");

  auto gene_f = feat::GeneFeaturizer::make(cfg.gene_feat);
  auto img_f = feat::ImageFeaturizer::make(cfg.img_feat, ds.manifest);

  model::ModelConfig mcfg = cfg.model;
  mcfg.img_in_dim = img_f.dim();
  mcfg.gene_in_dim = gene_f.dim();
  auto net = model::GeneQueryNet<float>::init(mcfg);

  Prepared prep;
  prep.gene_trainable = cfg.gene_feat.trainable && cfg.gene_feat.kind == feat::FeatKind::hashed_text;
  prep.img_trainable = cfg.img_feat.trainable && cfg.img_feat.kind == feat::FeatKind::tiny_conv;
  if (prep.gene_trainable) net.params.add("feat_gene.emb", gene_f.embedding_table());
  if (prep.img_trainable) {
    net.params.add("feat_img.c1.w", img_f.conv1_w());
    net.params.add("feat_img.c1.b", img_f.conv1_b());
    net.params.add("feat_img.c2.w", img_f.conv2_w());
    net.params.add("feat_img.c2.b", img_f.conv2_b());
  }
  if (warm_start) {
    for (const auto& [name, entry] : *warm_start) {
      if (!net.params.has(name)) continue;
      if (!entry.value.same_shape(net.params.value(name)))
        fail(errc::shape, "warm start shape mismatch for " + name);
      net.params.value(name) = entry.value;
    }
  }

  if (seen_genes) {
    if (seen_genes->empty()) fail(errc::argument, "train: empty seen-gene set");
    prep.gene_idx = *seen_genes;
  } else {
    prep.gene_idx.resize(ds.n_genes());
    std::iota(prep.gene_idx.begin(), prep.gene_idx.end(), std::size_t(0));
  }

  if (prep.gene_trainable) {
    for (std::size_t j : prep.gene_idx) prep.gene_buckets.push_back(gene_f.buckets(ds.genes.record(j)));
  } else {
    prep.e_gene = num::Tensor<float>({prep.gene_idx.size(), gene_f.dim()});
    for (std::size_t g = 0; g < prep.gene_idx.size(); ++g) {
      auto v = gene_f.encode(ds.genes.record(prep.gene_idx[g]));
      for (std::size_t c = 0; c < v.size(); ++c) prep.e_gene.at(g, c) = v[c];
    }
  }

  std::vector<data::RowRange> wsi_ranges;
  for (const auto& wsi : train_wsis) wsi_ranges.push_back(ds.rows_of(wsi));
  prep.n_wsis = wsi_ranges.size();
  for (std::size_t w = 0; w < wsi_ranges.size(); ++w) {
    for (std::size_t i = 0; i < wsi_ranges[w].count; ++i) {
      prep.rows.push_back(wsi_ranges[w].begin + i);
      prep.row_wsi.push_back(w);
      const auto& spot = ds.spots[wsi_ranges[w].begin + i];
      prep.coords.emplace_back(spot.x, spot.y);
    }
  }
  if (prep.rows.empty()) fail(errc::argument, "train: training WSIs contain no spots");

  if (prep.img_trainable) {
    for (std::size_t r : prep.rows) prep.patch_planes.push_back(img_f.patch_planes(ds.spots[r]));
  } else {
    prep.e_img = num::Tensor<float>({prep.rows.size(), img_f.dim()});
    for (std::size_t i = 0; i < prep.rows.size(); ++i) {
      auto v = img_f.encode(ds.spots[prep.rows[i]]);
      for (std::size_t c = 0; c < v.size(); ++c) prep.e_img.at(i, c) = v[c];
    }
  }

  // Items: spots in gene-aware mode, (wsi, gene) query pairs in spot-aware
  // mode. A leading slice of a seeded shuffle becomes the eval split, used
  // for logging only.
  bool gene_aware = mcfg.mode == model::Mode::gene_aware;
  std::size_t n_items = gene_aware ? prep.rows.size() : prep.n_wsis * prep.gene_idx.size();
  std::vector<std::size_t> item_order(n_items);
  std::iota(item_order.begin(), item_order.end(), std::size_t(0));
  {
    num::Rng rng(num::mix(cfg.seed, "eval_split"));
    num::shuffle(item_order, rng);
  }
  auto eval_count = static_cast<std::size_t>(cfg.eval_fraction * static_cast<double>(n_items));
  std::vector<std::size_t> eval_items(item_order.begin(),
                                      item_order.begin() + static_cast<std::ptrdiff_t>(eval_count));
  std::vector<std::size_t> train_items(item_order.begin() + static_cast<std::ptrdiff_t>(eval_count),
                                       item_order.end());
  std::sort(train_items.begin(), train_items.end());
  std::sort(eval_items.begin(), eval_items.end());
  if (train_items.empty()) fail(errc::argument, "train: eval split left no training items");

  num::Adam<float> adam({.lr = static_cast<float>(cfg.lr)});
  TrainResult result;

  auto run_item = [&](std::size_t item, bool want_grad) -> ItemLoss {
    if (gene_aware) return gene_aware_item(net, prep, norm, item, want_grad, net.params);
    std::size_t w = item / prep.gene_idx.size();
    std::size_t gene_pos = item % prep.gene_idx.size();
    std::size_t first = 0;
    for (std::size_t i = 0; i < w; ++i) first += wsi_ranges[i].count;
    return spot_aware_item(net, prep, norm, first, wsi_ranges[w].count, gene_pos, want_grad,
                           net.params);
  };

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    // Batch schedule. Gene-aware: shuffled spots, consecutive slices of
    // batch_size. Spot-aware: per-WSI shuffled gene queues, visited
    // round-robin so a batch holds queries against a single WSI's sequence.
    std::vector<std::vector<std::size_t>> batches;
    if (gene_aware) {
      auto order = train_items;
      num::Rng rng(num::mix(num::mix(cfg.seed, "epoch_shuffle"), epoch));
      num::shuffle(order, rng);
      for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
        std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(b0),
                             order.begin() + static_cast<std::ptrdiff_t>(b1));
      }
    } else {
      std::vector<std::vector<std::size_t>> queues(prep.n_wsis);
      for (std::size_t item : train_items) queues[item / prep.gene_idx.size()].push_back(item);
      for (std::size_t w = 0; w < prep.n_wsis; ++w) {
        num::Rng rng(num::mix(num::mix(cfg.seed, "epoch_shuffle"), (epoch << 16) | w));
        num::shuffle(queues[w], rng);
      }
      std::vector<std::size_t> cursor(prep.n_wsis, 0);
      bool remaining = true;
      while (remaining) {
        remaining = false;
        for (std::size_t w = 0; w < prep.n_wsis; ++w) {
          if (cursor[w] >= queues[w].size()) continue;
          std::size_t take = std::min(cfg.batch_size, queues[w].size() - cursor[w]);
          batches.emplace_back(queues[w].begin() + static_cast<std::ptrdiff_t>(cursor[w]),
                               queues[w].begin() + static_cast<std::ptrdiff_t>(cursor[w] + take));
          cursor[w] += take;
          if (cursor[w] < queues[w].size()) remaining = true;
        }
      }
    }

    double epoch_se = 0.0;
    std::size_t epoch_cells = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      net.params.zero_grads();
      double batch_se = 0.0;
      std::size_t batch_cells = 0;
      for (std::size_t item : batches[b]) {
        ItemLoss l;
        try {
          l = run_item(item, true);
        } catch (const Error& e) {
          if (e.kind() == errc::numeric)
            fail(errc::numeric, std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                                    " batch " + std::to_string(b + 1));
          throw;
        }
        batch_se += l.se;
        batch_cells += l.cells;
      }
      net.params.scale_grads(1.0f / static_cast<float>(batch_cells));
      adam.step(net.params);
      epoch_se += batch_se;
      epoch_cells += batch_cells;
    }

    EpochLog log;
    log.epoch = epoch;
    log.train_mse = epoch_se / static_cast<double>(epoch_cells);
    if (!eval_items.empty()) {
      double se = 0.0;
      std::size_t cells = 0;
      for (std::size_t item : eval_items) {
        auto l = run_item(item, false);
        se += l.se;
        cells += l.cells;
      }
      log.eval_mse = se / static_cast<double>(cells);
    }
    result.log.push_back(log);
  }

  // Last checkpoint is the artifact; no early stopping.
  Checkpoint ckpt;
  ckpt.params = net.params;
  auto& h = ckpt.header;
  h["mode"] = model::mode_name(mcfg.mode);
  h["d_fuse"] = std::to_string(mcfg.d_fuse);
  h["layers"] = std::to_string(mcfg.layers);
  h["heads"] = std::to_string(mcfg.heads);
  h["max_len"] = std::to_string(mcfg.max_len);
  h["img_in_dim"] = std::to_string(mcfg.img_in_dim);
  h["gene_in_dim"] = std::to_string(mcfg.gene_in_dim);
  h["model_seed"] = std::to_string(mcfg.seed);
  h["pos_embedding"] = mcfg.pos_embedding ? "1" : "0";
  h["pos_table"] = std::to_string(mcfg.pos_table);
  h["gene_feat"] = feat_header(cfg.gene_feat);
  h["img_feat"] = feat_header(cfg.img_feat);
  h["epochs"] = std::to_string(cfg.epochs);
  h["batch_size"] = std::to_string(cfg.batch_size);
  h["lr"] = fmt_double(cfg.lr);
  h["eval_fraction"] = fmt_double(cfg.eval_fraction);
  h["train_seed"] = std::to_string(cfg.seed);
  h["final_epoch"] = std::to_string(cfg.epochs);
  result.checkpoint = std::move(ckpt);
  return result;
}

Restored restore_model(const Checkpoint& ckpt) {
  auto need = [&](const std::string& key) -> const std::string& {
    auto it = ckpt.header.find(key);
    if (it == ckpt.header.end()) fail(errc::data, "checkpoint: missing header key " + key);
    return it->second;
  };
  Restored r;
  model::ModelConfig cfg;
  cfg.mode = model::mode_from(need("mode"));
  cfg.d_fuse = std::stoul(need("d_fuse"));
  cfg.layers = std::stoul(need("layers"));
  cfg.heads = std::stoul(need("heads"));
  cfg.max_len = std::stoul(need("max_len"));
  cfg.img_in_dim = std::stoul(need("img_in_dim"));
  cfg.gene_in_dim = std::stoul(need("gene_in_dim"));
  cfg.seed = std::stoull(need("model_seed"));
  cfg.pos_embedding = need("pos_embedding") == "1";
  cfg.pos_table = std::stoul(need("pos_table"));
  cfg.validate();
  r.net.cfg = cfg;
  r.net.params = ckpt.params;
  r.gene_spec = feat_from_header(need("gene_feat"));
  r.img_spec = feat_from_header(need("img_feat"));
  r.train_seed = std::stoull(need("train_seed"));
  return r;
}

}  // namespace gq::trainer
