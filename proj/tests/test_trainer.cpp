// Training loop, determinism, checkpoint persistence, seen-gene isolation.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "genequery/evalkit/evaluate.hpp"
#include "genequery/model/predict.hpp"
#include "genequery/numcore/adam.hpp"
#include "genequery/stdata/normalize.hpp"
#include "genequery/stdata/splits.hpp"
#include "genequery/stdata/synth.hpp"
#include "genequery/trainer/train.hpp"

using namespace gq;
using namespace gq::trainer;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("gq_train_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

data::SynthParams small_params() {
  data::SynthParams p;
  p.n_wsis = 1;
  p.spots_per_wsi = 48;
  p.m_genes = 10;
  p.feature_dim = 10;
  p.noise_sd = 0.5;
  p.seed = 5;
  return p;
}

TrainConfig small_cfg(model::Mode mode) {
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 16;
  cfg.lr = 1e-3;
  cfg.seed = 9;
  cfg.eval_fraction = 0.1;
  cfg.model.mode = mode;
  cfg.model.d_fuse = 16;
  cfg.model.layers = 1;
  cfg.model.heads = 2;
  cfg.model.seed = 3;
  cfg.gene_feat.kind = feat::FeatKind::hashed_text;
  cfg.gene_feat.output_dim = 16;
  cfg.gene_feat.vocab_buckets = 1024;
  cfg.gene_feat.seed = 21;
  cfg.img_feat.kind = feat::FeatKind::passthrough;
  return cfg;
}

}  // namespace

TEST_CASE("mse_loss examples") {
  using num::Tensor;
  Tensor<float> a({3}, {1.f, 2.f, 3.f});
  CHECK(mse_loss(a, a) == 0.0);

  Tensor<float> p({1}, {0.f}), t({1}, {2.f});
  CHECK(mse_loss(p, t) == doctest::Approx(4.0).epsilon(1e-12));

  Tensor<float> p2({2}, {1.f, 2.f}), t2({2}, {0.f, 0.f});
  CHECK(mse_loss(p2, t2) == doctest::Approx(2.5).epsilon(1e-12));

  std::vector<std::uint8_t> none = {0, 0};
  CHECK_THROWS_AS((void)mse_loss(p2, t2, none), Error);
}

TEST_CASE("lr=0 training leaves parameters at initialization") {
  auto ds = data::synth_make(small_params());
  auto norm = data::normalize(ds.expr);
  auto cfg = small_cfg(model::Mode::gene_aware);
  cfg.epochs = 1;
  cfg.lr = 0.0;
  auto res = train(ds, norm, {"W00"}, nullptr, cfg);

  model::ModelConfig mcfg = cfg.model;
  mcfg.img_in_dim = 10;
  mcfg.gene_in_dim = 16;
  auto fresh = model::GeneQueryNet<float>::init(mcfg);
  for (const auto& [name, entry] : fresh.params) {
    const auto& trained = res.checkpoint.params.value(name);
    for (std::size_t i = 0; i < entry.value.size(); ++i) CHECK(trained[i] == entry.value[i]);
  }
}

TEST_CASE("identical seeds give bitwise-identical loss logs") {
  auto ds = data::synth_make(small_params());
  auto norm = data::normalize(ds.expr);
  auto cfg = small_cfg(model::Mode::gene_aware);
  auto a = train(ds, norm, {"W00"}, nullptr, cfg);
  auto b = train(ds, norm, {"W00"}, nullptr, cfg);
  REQUIRE(a.log.size() == b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].train_mse == b.log[i].train_mse);
    CHECK(a.log[i].eval_mse == b.log[i].eval_mse);
  }
  cfg.seed = 10;
  auto c = train(ds, norm, {"W00"}, nullptr, cfg);
  CHECK(a.log[0].train_mse != c.log[0].train_mse);
}

TEST_CASE("training restricted to seen genes never reads unseen expression") {
  auto ds = data::synth_make(small_params());
  auto norm = data::normalize(ds.expr);
  auto split = data::make_gene_split(ds.n_genes(), 0.5, 17);

  std::set<std::size_t> unseen(split.unseen.begin(), split.unseen.end());
  std::set<std::size_t> touched;
  norm.set_read_observer([&](std::size_t, std::size_t c) { touched.insert(c); });

  for (auto mode : {model::Mode::gene_aware, model::Mode::spot_aware}) {
    touched.clear();
    auto cfg = small_cfg(mode);
    cfg.epochs = 1;
    (void)train(ds, norm, {"W00"}, &split.seen, cfg);
    CHECK(!touched.empty());
    for (std::size_t c : touched) CHECK(unseen.count(c) == 0);
  }
}

TEST_CASE("one optimizer step matches the hand-computed closed form on the L=0 model") {
  auto ds = data::synth_make(small_params());
  auto norm = data::normalize(ds.expr);
  auto cfg = small_cfg(model::Mode::gene_aware);
  cfg.model.layers = 0;
  cfg.epochs = 1;
  cfg.batch_size = 1000;  // single batch
  cfg.eval_fraction = 0.0;
  cfg.lr = 0.05;
  auto res = train(ds, norm, {"W00"}, nullptr, cfg);

  // Recompute the closed form: p(i,j) = R(h_img_i + h_gene_j); gradients of
  // the mean squared error for reg.w / reg.b; one Adam step from zero moments.
  model::ModelConfig mcfg = cfg.model;
  mcfg.img_in_dim = 10;
  mcfg.gene_in_dim = 16;
  auto net0 = model::GeneQueryNet<float>::init(mcfg);
  auto gene_f = feat::GeneFeaturizer::make(cfg.gene_feat);
  auto img_f = feat::ImageFeaturizer::make(cfg.img_feat, ds.manifest);

  std::size_t n = ds.n_spots(), k = ds.n_genes(), d = mcfg.d_fuse;
  const auto& wi = net0.params.value("proj_img.w");
  const auto& wg = net0.params.value("proj_gene.w");
  const auto& rw = net0.params.value("reg.w");
  double rb = net0.params.value("reg.b")[0];
  std::vector<double> grad_w(d, 0.0);
  double grad_b = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto e_img = img_f.encode(ds.spots[i]);
    for (std::size_t j = 0; j < k; ++j) {
      auto e_gene = gene_f.encode(ds.genes.record(j));
      std::vector<double> h(d, 0.0);
      for (std::size_t c = 0; c < d; ++c) {
        for (std::size_t a = 0; a < e_img.size(); ++a)
          h[c] += static_cast<double>(e_img[a]) * wi.at(a, c);
        for (std::size_t a = 0; a < e_gene.size(); ++a)
          h[c] += static_cast<double>(e_gene[a]) * wg.at(a, c);
      }
      double pred = rb;
      for (std::size_t c = 0; c < d; ++c) pred += h[c] * rw.at(c, 0);
      double resid = 2.0 * (pred - norm.cell(i, j)) / static_cast<double>(n * k);
      for (std::size_t c = 0; c < d; ++c) grad_w[c] += resid * h[c];
      grad_b += resid;
    }
  }
  num::ParamStore<double> hand;
  hand.add("reg.w", net0.params.value("reg.w").cast<double>());
  hand.add("reg.b", net0.params.value("reg.b").cast<double>());
  for (std::size_t c = 0; c < d; ++c) hand.grad("reg.w")[c] = grad_w[c];
  hand.grad("reg.b")[0] = grad_b;
  num::Adam<double> adam({.lr = cfg.lr});
  adam.step(hand);

  for (std::size_t c = 0; c < d; ++c)
    CHECK(static_cast<double>(res.checkpoint.params.value("reg.w")[c]) ==
          doctest::Approx(hand.value("reg.w")[c]).epsilon(1e-6));
  CHECK(static_cast<double>(res.checkpoint.params.value("reg.b")[0]) ==
        doctest::Approx(hand.value("reg.b")[0]).epsilon(1e-6));
}

TEST_CASE("epoch-1 loss with a zero regressor and lr=0 is mean(truth squared)") {
  auto ds = data::synth_make(small_params());
  auto norm = data::normalize(ds.expr);
  auto cfg = small_cfg(model::Mode::gene_aware);
  cfg.epochs = 1;
  cfg.lr = 0.0;
  cfg.eval_fraction = 0.0;

  model::ModelConfig mcfg = cfg.model;
  mcfg.img_in_dim = 10;
  mcfg.gene_in_dim = 16;
  auto zeroed = model::GeneQueryNet<float>::init(mcfg);
  zeroed.params.value("reg.w").fill(0.0f);
  zeroed.params.value("reg.b").fill(0.0f);
  auto res = train(ds, norm, {"W00"}, nullptr, cfg, &zeroed.params);

  double want = 0.0;
  for (std::size_t i = 0; i < ds.n_spots(); ++i)
    for (std::size_t j = 0; j < ds.n_genes(); ++j) want += norm.cell(i, j) * norm.cell(i, j);
  want /= static_cast<double>(ds.n_spots() * ds.n_genes());
  CHECK(res.log[0].train_mse == doctest::Approx(want).epsilon(1e-6));
}

TEST_CASE("planted synthetic signal is learned") {
  data::SynthParams p;
  p.n_wsis = 1;
  p.spots_per_wsi = 80;
  p.m_genes = 15;
  p.feature_dim = 10;
  p.noise_sd = 1.0;
  p.seed = 31;
  auto ds = data::synth_make(p);
  auto norm = data::normalize(ds.expr);
  auto cfg = small_cfg(model::Mode::gene_aware);
  cfg.epochs = 100;
  cfg.batch_size = 32;
  cfg.lr = 3e-3;
  auto res = train(ds, norm, {"W00"}, nullptr, cfg);
  REQUIRE(res.log.size() == 100);
  CHECK(res.log.back().train_mse <= 0.1 * res.log.front().train_mse);
}

TEST_CASE("spot-aware training runs and logs") {
  auto ds = data::synth_make(small_params());
  auto norm = data::normalize(ds.expr);
  auto cfg = small_cfg(model::Mode::spot_aware);
  cfg.epochs = 2;
  cfg.batch_size = 4;
  auto res = train(ds, norm, {"W00"}, nullptr, cfg);
  REQUIRE(res.log.size() == 2);
  for (const auto& l : res.log) CHECK(std::isfinite(l.train_mse));
}

TEST_CASE("numeric blow-up aborts with epoch/batch diagnostics") {
  auto ds = data::synth_make(small_params());
  auto norm = data::normalize(ds.expr);
  auto cfg = small_cfg(model::Mode::gene_aware);
  cfg.epochs = 3;
  cfg.batch_size = 8;
  cfg.lr = 1e18;
  try {
    (void)train(ds, norm, {"W00"}, nullptr, cfg);
    FAIL("expected numeric failure");
  } catch (const Error& e) {
    CHECK(e.kind() == errc::numeric);
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
    CHECK(std::string(e.what()).find("batch") != std::string::npos);
  }
}

TEST_CASE("trainable gene embedding is updated and checkpointed") {
  auto ds = data::synth_make(small_params());
  auto norm = data::normalize(ds.expr);
  auto cfg = small_cfg(model::Mode::gene_aware);
  cfg.gene_feat.trainable = true;
  cfg.epochs = 2;
  auto res = train(ds, norm, {"W00"}, nullptr, cfg);
  REQUIRE(res.checkpoint.params.has("feat_gene.emb"));

  auto initial = feat::GeneFeaturizer::make(cfg.gene_feat).embedding_table();
  const auto& trained = res.checkpoint.params.value("feat_gene.emb");
  bool changed = false;
  for (std::size_t i = 0; i < trained.size(); ++i) changed = changed || trained[i] != initial[i];
  CHECK(changed);
}

TEST_CASE("checkpoint round-trip reproduces predictions bitwise") {
  auto ds = data::synth_make(small_params());
  auto norm = data::normalize(ds.expr);
  auto cfg = small_cfg(model::Mode::gene_aware);
  auto res = train(ds, norm, {"W00"}, nullptr, cfg);

  auto dir = temp_dir("ckpt");
  auto path = dir / "model.gqck";
  save_checkpoint(res.checkpoint, path);
  auto loaded = load_checkpoint(path);
  CHECK(loaded.header == res.checkpoint.header);

  auto r1 = restore_model(res.checkpoint);
  auto r2 = restore_model(loaded);
  auto gene_f = make_gene_featurizer(r1.gene_spec, &r1.net.params);
  auto img_f = make_image_featurizer(r1.img_spec, ds.manifest, &r1.net.params);
  std::vector<data::GeneRecord> queries(ds.genes.records());
  auto p1 = model::predict_wsi(r1.net, gene_f, img_f, ds, "W00", queries);
  auto gene_f2 = make_gene_featurizer(r2.gene_spec, &r2.net.params);
  auto img_f2 = make_image_featurizer(r2.img_spec, ds.manifest, &r2.net.params);
  auto p2 = model::predict_wsi(r2.net, gene_f2, img_f2, ds, "W00", queries);
  REQUIRE(p1.preds.size() == p2.preds.size());
  for (std::size_t i = 0; i < p1.preds.size(); ++i) CHECK(p1.preds[i] == p2.preds[i]);

  // unseen gene names still predict finitely through the hashed featurizer
  std::vector<data::GeneRecord> unseen = {{"NOVEL1", "sig001 sig002 mystery"}};
  auto pu = model::predict_wsi(r1.net, gene_f, img_f, ds, "W00", unseen);
  CHECK(pu.preds.all_finite());
}

TEST_CASE("evaluate matches an independent pipeline oracle on a trained model") {
  auto ds = data::synth_make(small_params());
  auto norm = data::normalize(ds.expr);
  auto cfg = small_cfg(model::Mode::gene_aware);
  cfg.epochs = 5;
  auto res = train(ds, norm, {"W00"}, nullptr, cfg);
  auto restored = restore_model(res.checkpoint);
  auto gene_f = make_gene_featurizer(restored.gene_spec, &restored.net.params);
  auto img_f = make_image_featurizer(restored.img_spec, ds.manifest, &restored.net.params);

  std::vector<std::size_t> scope(ds.n_genes());
  std::iota(scope.begin(), scope.end(), std::size_t(0));
  auto entry = eval::evaluate(restored.net, gene_f, img_f, ds, norm, {"W00"}, scope);

  // From-scratch reimplementation of the averaging pipeline.
  std::vector<data::GeneRecord> queries(ds.genes.records());
  auto p = model::predict_wsi(restored.net, gene_f, img_f, ds, "W00", queries);
  auto range = ds.rows_of("W00");
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t j = 0; j < ds.n_genes(); ++j) {
    double n = static_cast<double>(range.count), sx = 0, sy = 0, sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < range.count; ++i) {
      double x = static_cast<double>(p.preds.at(i, j));
      double y = norm.cell(range.begin + i, j);
      sx += x;
      sy += y;
      sxy += x * y;
      sxx += x * x;
      syy += y * y;
    }
    double vx = n * sxx - sx * sx, vy = n * syy - sy * sy;
    if (vx == 0.0 || vy == 0.0) continue;
    sum += (n * sxy - sx * sy) / std::sqrt(vx * vy);
    ++used;
  }
  REQUIRE(used > 0);
  CHECK(std::abs(entry.all.mean_pcc - sum / static_cast<double>(used)) < 1e-9);

  // transfer onto the same dataset equals the in-domain evaluation
  auto same = eval::transfer_eval(restored.net, gene_f, img_f, ds.genes, ds, norm);
  auto indomain = eval::evaluate(restored.net, gene_f, img_f, ds, norm, ds.manifest.wsi_ids, scope);
  CHECK(same.all.mean_pcc == indomain.all.mean_pcc);
  CHECK(same.scope_genes == indomain.scope_genes);

  // disjoint libraries are an argument error
  auto other = data::GeneLibrary::from_records({{"ZZZ1", ""}, {"ZZZ2", ""}});
  CHECK_THROWS_AS((void)eval::transfer_eval(restored.net, gene_f, img_f, other, ds, norm), Error);
}

TEST_CASE("corrupted checkpoints are rejected with distinct diagnostics") {
  auto ds = data::synth_make(small_params());
  auto norm = data::normalize(ds.expr);
  auto cfg = small_cfg(model::Mode::gene_aware);
  cfg.epochs = 1;
  auto res = train(ds, norm, {"W00"}, nullptr, cfg);
  auto dir = temp_dir("corrupt");
  auto path = dir / "model.gqck";
  save_checkpoint(res.checkpoint, path);

  auto read_all = [&]() {
    std::ifstream f(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
  };
  auto write_all = [&](const fs::path& p, const std::string& bytes) {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  };
  std::string bytes = read_all();

  SUBCASE("bad magic") {
    std::string bad = bytes;
    bad[0] = 'X';
    write_all(dir / "bad.gqck", bad);
    try {
      (void)load_checkpoint(dir / "bad.gqck");
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("bad magic") != std::string::npos);
    }
  }
  SUBCASE("version mismatch") {
    std::string bad = bytes;
    bad[4] = 2;  // little-endian u32 version
    write_all(dir / "ver.gqck", bad);
    try {
      (void)load_checkpoint(dir / "ver.gqck");
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("version mismatch") != std::string::npos);
    }
  }
  SUBCASE("truncated section") {
    write_all(dir / "trunc.gqck", bytes.substr(0, bytes.size() / 2));
    try {
      (void)load_checkpoint(dir / "trunc.gqck");
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("truncated") != std::string::npos);
    }
  }
}
