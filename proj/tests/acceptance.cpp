// Acceptance suite: one criterion per function, one PASS/FAIL line each.
// Exit code is the number of failed criteria.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "genequery/evalkit/evaluate.hpp"
#include "genequery/model/predict.hpp"
#include "genequery/numcore/gradcheck.hpp"
#include "genequery/stdata/io.hpp"
#include "genequery/stdata/normalize.hpp"
#include "genequery/stdata/splits.hpp"
#include "genequery/stdata/synth.hpp"
#include "genequery/trainer/train.hpp"

using namespace gq;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

fs::path work_root() {
  static fs::path root = [] {
    fs::path p = fs::temp_directory_path() / "gq_acceptance";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return root;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int run_cli(const std::string& args) {
  std::string cmd = std::string(GQ_CLI_BIN) + " " + args + " 2>" +
                    (work_root() / "stderr.txt").string();
  int status = std::system(cmd.c_str());
  if (status == -1) return -1;
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

void write_file(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::trunc);
  f << text;
}

// The shared synthetic-learning fixture: 2 WSIs x 200 spots x 60 genes,
// feature dim 16, noise sd 1, fixed seed.
const data::SynthParams& accept_synth() {
  static data::SynthParams p = [] {
    data::SynthParams q;
    q.n_wsis = 2;
    q.spots_per_wsi = 200;
    q.m_genes = 60;
    q.feature_dim = 16;
    q.noise_sd = 1.0;
    q.seed = 2024;
    return q;
  }();
  return p;
}

trainer::TrainConfig accept_train_config() {
  trainer::TrainConfig cfg;
  cfg.epochs = 100;
  cfg.batch_size = 100;
  cfg.lr = 2e-3;
  cfg.seed = 11;
  cfg.eval_fraction = 0.1;
  cfg.model.mode = model::Mode::gene_aware;
  cfg.model.d_fuse = 48;
  cfg.model.layers = 2;
  cfg.model.heads = 4;
  cfg.model.seed = 5;
  cfg.gene_feat.kind = feat::FeatKind::hashed_text;
  cfg.gene_feat.output_dim = 64;
  cfg.gene_feat.vocab_buckets = 8192;
  cfg.gene_feat.seed = 77;
  return cfg;
}

std::vector<std::size_t> all_genes(const data::Dataset& ds) {
  std::vector<std::size_t> idx(ds.n_genes());
  std::iota(idx.begin(), idx.end(), std::size_t(0));
  return idx;
}

eval::EvalEntry eval_checkpoint(const trainer::TrainResult& res, const data::Dataset& ds,
                                const data::ExpressionMatrix& norm,
                                const std::vector<std::string>& test_wsis,
                                const std::vector<std::size_t>& scope) {
  auto restored = trainer::restore_model(res.checkpoint);
  auto gene_f = trainer::make_gene_featurizer(restored.gene_spec, &restored.net.params);
  auto img_f = trainer::make_image_featurizer(restored.img_spec, ds.manifest, &restored.net.params);
  return eval::evaluate(restored.net, gene_f, img_f, ds, norm, test_wsis, scope);
}

// ---------------------------------------------------------------------------
// Criterion 1: gradient fidelity of the full model, both modes, tiny config,
// 64-bit, max relative error < 1e-4, runtime < 60 s.
bool criterion_gradients(std::string& detail) {
  auto t0 = Clock::now();
  model::ModelConfig cfg;
  cfg.d_fuse = 8;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.img_in_dim = 5;
  cfg.gene_in_dim = 6;
  cfg.seed = 7;

  num::Tensor<double> e_img = num::normal_init<double>({3, 5}, 101, 1.0);
  num::Tensor<double> e_gene = num::normal_init<double>({4, 6}, 102, 1.0);
  num::Tensor<double> truth = num::normal_init<double>({3, 4}, 103, 0.5);

  double worst = 0.0;
  for (auto mode : {model::Mode::gene_aware, model::Mode::spot_aware}) {
    cfg.mode = mode;
    auto net = model::GeneQueryNet<double>::init(cfg);
    auto loss = [&](bool want_grad) {
      double total = 0.0;
      if (mode == model::Mode::gene_aware) {
        for (std::size_t i = 0; i < 3; ++i) {
          num::Tape<double> tape;
          num::BoundParams<double> bp(tape, net.params);
          num::Tensor<double> row({1, 5});
          for (std::size_t c = 0; c < 5; ++c) row.at(0, c) = e_img.at(i, c);
          auto res = model::forward_gene_aware(tape, bp, cfg,
                                               model::project_img(tape, bp, tape.input(row)),
                                               model::project_gene(tape, bp, tape.input(e_gene)), {});
          num::Tensor<double> t({4});
          for (std::size_t j = 0; j < 4; ++j) t[j] = truth.at(i, j);
          auto sq = tape.scale(tape.sq_err_sum(res.preds, t), 1.0 / 12.0);
          if (want_grad) {
            tape.backward(sq);
            bp.accumulate_grads(tape, net.params);
          }
          total += tape.val(sq)[0];
        }
      } else {
        for (std::size_t j = 0; j < 4; ++j) {
          num::Tape<double> tape;
          num::BoundParams<double> bp(tape, net.params);
          num::Tensor<double> row({1, 6});
          for (std::size_t c = 0; c < 6; ++c) row.at(0, c) = e_gene.at(j, c);
          auto res = model::forward_spot_aware(tape, bp, cfg,
                                               model::project_img(tape, bp, tape.input(e_img)),
                                               model::project_gene(tape, bp, tape.input(row)), {});
          num::Tensor<double> t({3});
          for (std::size_t i = 0; i < 3; ++i) t[i] = truth.at(i, j);
          auto sq = tape.scale(tape.sq_err_sum(res.preds, t), 1.0 / 12.0);
          if (want_grad) {
            tape.backward(sq);
            bp.accumulate_grads(tape, net.params);
          }
          total += tape.val(sq)[0];
        }
      }
      return total;
    };
    worst = std::max(worst, num::grad_check(loss, net.params, 1e-4));
  }
  double secs = seconds_since(t0);
  std::ostringstream os;
  os << "max rel err " << worst << " (< 1e-4), " << secs << " s (< 60)";
  detail = os.str();
  return worst < 1e-4 && secs < 60.0;
}

// ---------------------------------------------------------------------------
// Criterion 2: pearson vs an independently coded direct-formula oracle on
// 1000 random length-50 pairs within 1e-9; scale/shift invariance for 100
// random affine transforms.
bool criterion_metric_oracle(std::string& detail) {
  num::Rng rng(424242);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> x(50), y(50);
    for (std::size_t i = 0; i < 50; ++i) {
      x[i] = rng.normal(0, 2);
      y[i] = 0.3 * x[i] + rng.normal(0, 1.5);
    }
    auto got = eval::pearson(x, y);
    if (!got) {
      detail = "unexpected undefined PCC";
      return false;
    }
    // one-pass oracle, different arrangement from the implementation
    double n = 50, sx = 0, sy = 0, sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < 50; ++i) {
      sx += x[i];
      sy += y[i];
      sxy += x[i] * y[i];
      sxx += x[i] * x[i];
      syy += y[i] * y[i];
    }
    double oracle = (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
    worst = std::max(worst, std::abs(*got - oracle));
  }

  double worst_affine = 0.0;
  std::vector<double> x(50), y(50);
  for (std::size_t i = 0; i < 50; ++i) {
    x[i] = rng.normal();
    y[i] = 0.7 * x[i] + rng.normal();
  }
  double base = *eval::pearson(x, y);
  for (int t = 0; t < 100; ++t) {
    double a = rng.normal();
    if (std::abs(a) < 0.05) a = a < 0 ? a - 0.05 : a + 0.05;
    double b = rng.normal(0, 10);
    std::vector<double> ax(50);
    for (std::size_t i = 0; i < 50; ++i) ax[i] = a * x[i] + b;
    double want = (a > 0 ? 1.0 : -1.0) * base;
    worst_affine = std::max(worst_affine, std::abs(*eval::pearson(ax, y) - want));
  }
  std::ostringstream os;
  os << "oracle gap " << worst << ", affine-invariance gap " << worst_affine << " (< 1e-9)";
  detail = os.str();
  return worst < 1e-9 && worst_affine < 1e-9;
}

// ---------------------------------------------------------------------------
// Criterion 3: gene-aware training on the synthetic fixture, 100 epochs:
// final train MSE <= 10% of epoch-1 MSE and held-out-WSI PCC(ALL) >= 0.5,
// within 10 minutes on one core.
bool criterion_synthetic_learning(std::string& detail) {
  auto t0 = Clock::now();
  auto ds = data::synth_make(accept_synth());
  auto norm = data::normalize(ds.expr);
  auto cfg = accept_train_config();
  auto res = trainer::train(ds, norm, {"W00"}, nullptr, cfg);

  double first = res.log.front().train_mse;
  double last = res.log.back().train_mse;
  auto entry = eval_checkpoint(res, ds, norm, {"W01"}, all_genes(ds));
  double secs = seconds_since(t0);

  std::ostringstream os;
  os << "train MSE " << first << " -> " << last << " (ratio " << last / first
     << ", need <= 0.1), held-out PCC(ALL) " << entry.all.mean_pcc << " (>= 0.5), " << secs
     << " s (< 600)";
  detail = os.str();
  return last <= 0.1 * first && entry.all.mean_pcc >= 0.5 && secs < 600.0;
}

// ---------------------------------------------------------------------------
// Criterion 4: unseen-gene generalization at 20/40/60% seen: unseen-scope
// PCC(ALL) > 0.2 at every ratio and unseen PCC at 60% >= unseen PCC at 20%.
bool criterion_unseen_genes(std::string& detail) {
  auto ds = data::synth_make(accept_synth());
  auto norm = data::normalize(ds.expr);
  std::ostringstream os;
  bool ok = true;
  double pcc20 = 0.0, pcc60 = 0.0;
  for (double ratio : {0.2, 0.4, 0.6}) {
    auto split = data::make_gene_split(ds.n_genes(), ratio, 909);
    auto cfg = accept_train_config();
    auto res = trainer::train(ds, norm, {"W00"}, &split.seen, cfg);
    auto entry = eval_checkpoint(res, ds, norm, {"W01"}, split.unseen);
    os << "unseen PCC(ALL) @" << ratio << " = " << entry.all.mean_pcc << "; ";
    ok = ok && entry.all.mean_pcc > 0.2;
    if (ratio == 0.2) pcc20 = entry.all.mean_pcc;
    if (ratio == 0.6) pcc60 = entry.all.mean_pcc;
  }
  ok = ok && pcc60 >= pcc20;
  os << "monotone 60% >= 20%: " << (pcc60 >= pcc20 ? "yes" : "no");
  detail = os.str();
  return ok;
}

// ---------------------------------------------------------------------------
// Criterion 5: mode parity and equivariance. Both modes train and evaluate on
// one fixture; permutation-equivariance and padding-invariance within 1e-6;
// zeroed-transformer closed form within 1e-12.
bool criterion_mode_parity(std::string& detail) {
  data::SynthParams p;
  p.n_wsis = 2;
  p.spots_per_wsi = 40;
  p.m_genes = 12;
  p.feature_dim = 8;
  p.noise_sd = 0.5;
  p.seed = 33;
  auto ds = data::synth_make(p);
  auto norm = data::normalize(ds.expr);

  std::ostringstream os;
  bool ok = true;
  for (auto mode : {model::Mode::gene_aware, model::Mode::spot_aware}) {
    auto cfg = accept_train_config();
    cfg.epochs = 3;
    cfg.batch_size = 20;
    cfg.model.mode = mode;
    cfg.model.d_fuse = 16;
    cfg.model.heads = 2;
    auto res = trainer::train(ds, norm, {"W00"}, nullptr, cfg);
    auto entry = eval_checkpoint(res, ds, norm, {"W01"}, all_genes(ds));
    bool finite = std::isfinite(entry.all.mean_pcc);
    os << model::mode_name(mode) << " trained+evaluated (PCC(ALL) " << entry.all.mean_pcc << "); ";
    ok = ok && finite;
  }

  // permutation equivariance (float, 1e-6)
  model::ModelConfig mc;
  mc.mode = model::Mode::gene_aware;
  mc.d_fuse = 8;
  mc.layers = 2;
  mc.heads = 2;
  mc.img_in_dim = 5;
  mc.gene_in_dim = 6;
  mc.seed = 3;
  auto net = model::GeneQueryNet<float>::init(mc);
  num::Tensor<float> e_img = num::normal_init<float>({1, 5}, 61, 1.0);
  num::Tensor<float> e_gene = num::normal_init<float>({6, 6}, 62, 1.0);
  std::vector<std::size_t> perm = {5, 3, 0, 4, 2, 1};
  num::Tensor<float> e_perm({6, 6});
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t c = 0; c < 6; ++c) e_perm.at(r, c) = e_gene.at(perm[r], c);
  auto base = model::predict_matrix(net, e_img, e_gene);
  auto permuted = model::predict_matrix(net, e_img, e_perm);
  double perm_gap = 0.0;
  for (std::size_t r = 0; r < 6; ++r)
    perm_gap = std::max(perm_gap, std::abs(static_cast<double>(permuted.preds.at(0, r)) -
                                           static_cast<double>(base.preds.at(0, perm[r]))));
  ok = ok && perm_gap <= 1e-6;
  os << "perm gap " << perm_gap << "; ";

  // padding invariance (float, 1e-6)
  auto ms = mc;
  ms.mode = model::Mode::spot_aware;
  auto net_s = model::GeneQueryNet<float>::init(ms);
  num::Tensor<float> imgs = num::normal_init<float>({3, 5}, 63, 1.0);
  num::Tensor<float> gene1 = num::normal_init<float>({1, 6}, 64, 1.0);
  num::Tape<float> t1;
  num::BoundParams<float> b1(t1, net_s.params);
  auto r1 = model::forward_spot_aware(t1, b1, ms, model::project_img(t1, b1, t1.input(imgs)),
                                      model::project_gene(t1, b1, t1.input(gene1)), {});
  num::Tensor<float> padded({8, 5});
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 5; ++c) padded.at(r, c) = imgs.at(r, c);
  std::vector<std::uint8_t> mask = {1, 1, 1, 0, 0, 0, 0, 0};
  num::Tape<float> t2;
  num::BoundParams<float> b2(t2, net_s.params);
  auto r2 = model::forward_spot_aware(t2, b2, ms, model::project_img(t2, b2, t2.input(padded)),
                                      model::project_gene(t2, b2, t2.input(gene1)), mask);
  double pad_gap = 0.0;
  for (std::size_t r = 0; r < 3; ++r)
    pad_gap = std::max(pad_gap, std::abs(static_cast<double>(t2.val(r2.preds)[r]) -
                                         static_cast<double>(t1.val(r1.preds)[r])));
  ok = ok && pad_gap <= 1e-6;
  os << "padding gap " << pad_gap << "; ";

  // zeroed output projections: closed form R(h_img + h_gene) at 64-bit
  auto md = mc;
  auto net_d = model::GeneQueryNet<double>::init(md);
  for (std::size_t l = 0; l < md.layers; ++l) {
    net_d.params.value(model::GeneQueryNet<double>::block_prefix(l) + ".attn.wo").fill(0.0);
    net_d.params.value(model::GeneQueryNet<double>::block_prefix(l) + ".mlp.w2").fill(0.0);
  }
  num::Tensor<double> ei = num::normal_init<double>({1, 5}, 65, 1.0);
  num::Tensor<double> eg = num::normal_init<double>({4, 6}, 66, 1.0);
  auto out = model::predict_matrix(net_d, ei, eg);
  const auto& wi = net_d.params.value("proj_img.w");
  const auto& wg = net_d.params.value("proj_gene.w");
  const auto& rw = net_d.params.value("reg.w");
  double rb = net_d.params.value("reg.b")[0];
  double closed_gap = 0.0;
  for (std::size_t j = 0; j < 4; ++j) {
    double pred = rb;
    for (std::size_t c = 0; c < 8; ++c) {
      double h = 0.0;
      for (std::size_t a = 0; a < 5; ++a) h += ei[a] * wi.at(a, c);
      for (std::size_t a = 0; a < 6; ++a) h += eg.at(j, a) * wg.at(a, c);
      pred += h * rw.at(c, 0);
    }
    closed_gap = std::max(closed_gap, std::abs(pred - out.preds.at(0, j)));
  }
  ok = ok && closed_gap <= 1e-12;
  os << "closed-form gap " << closed_gap;
  detail = os.str();
  return ok;
}

// ---------------------------------------------------------------------------
// Criterion 6: determinism and persistence via the CLI plus checkpoint
// corruption diagnostics.
bool criterion_determinism(std::string& detail) {
  fs::path root = work_root();
  write_file(root / "det.cfg",
             "d_fuse=16\nlayers=1\nheads=2\nepochs=3\nbatch_size=20\n"
             "gene_embed_dim=16\ngene_vocab=1024\n"
             "synth_wsis=2\nsynth_spots=24\nsynth_genes=10\nsynth_feature_dim=8\n"
             "synth_noise_sd=0.5\n");
  std::string cfg = (root / "det.cfg").string();
  fs::path data_dir = root / "det_data";
  if (run_cli("synth --config " + cfg + " --out " + data_dir.string() + " --seed 99") != 0) {
    detail = "synth failed";
    return false;
  }
  std::ostringstream os;
  bool ok = true;

  // identical seeds -> identical loss logs and report files
  for (const char* name : {"det_a", "det_b"}) {
    if (run_cli("train --config " + cfg + " --data " + data_dir.string() + " --seed 4 --out " +
                (root / name).string()) != 0) {
      detail = "train failed";
      return false;
    }
    if (run_cli("eval " + (root / name / "checkpoint.gqck").string() + " --data " +
                data_dir.string() + " --out " + (root / name / "eval").string()) != 0) {
      detail = "eval failed";
      return false;
    }
  }
  bool logs_equal = slurp(root / "det_a" / "loss_log.tsv") == slurp(root / "det_b" / "loss_log.tsv");
  bool ckpt_equal =
      slurp(root / "det_a" / "checkpoint.gqck") == slurp(root / "det_b" / "checkpoint.gqck");
  bool reports_equal =
      slurp(root / "det_a" / "eval" / "report.tsv") == slurp(root / "det_b" / "eval" / "report.tsv");
  ok = ok && logs_equal && ckpt_equal && reports_equal;
  os << "loss logs equal: " << logs_equal << ", checkpoints equal: " << ckpt_equal
     << ", reports equal: " << reports_equal;

  // save -> load -> bitwise-identical predictions
  auto ds = data::load_dataset(data_dir);
  auto ckpt = trainer::load_checkpoint(root / "det_a" / "checkpoint.gqck");
  auto restored = trainer::restore_model(ckpt);
  auto gene_f = trainer::make_gene_featurizer(restored.gene_spec, &restored.net.params);
  auto img_f = trainer::make_image_featurizer(restored.img_spec, ds.manifest, &restored.net.params);
  std::vector<data::GeneRecord> queries(ds.genes.records());
  auto p1 = model::predict_wsi(restored.net, gene_f, img_f, ds, "W00", queries);
  fs::path resaved = root / "resaved.gqck";
  trainer::save_checkpoint(ckpt, resaved);
  auto ckpt2 = trainer::load_checkpoint(resaved);
  auto restored2 = trainer::restore_model(ckpt2);
  auto gene_f2 = trainer::make_gene_featurizer(restored2.gene_spec, &restored2.net.params);
  auto img_f2 =
      trainer::make_image_featurizer(restored2.img_spec, ds.manifest, &restored2.net.params);
  auto p2 = model::predict_wsi(restored2.net, gene_f2, img_f2, ds, "W00", queries);
  bool preds_equal = p1.preds.size() == p2.preds.size();
  for (std::size_t i = 0; preds_equal && i < p1.preds.size(); ++i)
    preds_equal = p1.preds[i] == p2.preds[i];
  ok = ok && preds_equal;
  os << ", reloaded predictions bitwise equal: " << preds_equal;

  // corrupted checkpoints: bad magic / version mismatch / truncation
  std::string bytes = slurp(root / "det_a" / "checkpoint.gqck");
  auto expect_reject = [&](std::string mutated, const char* what, const char* needle) {
    fs::path p = root / (std::string("corrupt_") + what + ".gqck");
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    f.write(mutated.data(), static_cast<std::streamsize>(mutated.size()));
    f.close();
    try {
      (void)trainer::load_checkpoint(p);
      return false;
    } catch (const Error& e) {
      return std::string(e.what()).find(needle) != std::string::npos;
    }
  };
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  std::string bad_version = bytes;
  bad_version[4] = 9;
  bool rejects = expect_reject(bad_magic, "magic", "bad magic") &&
                 expect_reject(bad_version, "version", "version mismatch") &&
                 expect_reject(bytes.substr(0, bytes.size() - 7), "trunc", "truncated");
  ok = ok && rejects;
  os << ", corrupted checkpoints rejected: " << rejects;
  detail = os.str();
  return ok;
}

// ---------------------------------------------------------------------------
// Criterion 7: protocol shape. Leave-one-WSI-out folds on a 4-WSI fixture via
// the CLI; transfer between two synthetic sets sharing 50% of gene names
// evaluates exactly the intersection with PCC(ALL) > 0.
bool criterion_protocol_shape(std::string& detail) {
  fs::path root = work_root();
  std::ostringstream os;
  bool ok = true;

  write_file(root / "folds.cfg",
             "d_fuse=16\nlayers=1\nheads=2\nepochs=2\nbatch_size=20\n"
             "gene_embed_dim=16\ngene_vocab=1024\n"
             "synth_wsis=4\nsynth_spots=12\nsynth_genes=8\nsynth_feature_dim=8\n"
             "synth_noise_sd=0.5\n");
  std::string fcfg = (root / "folds.cfg").string();
  fs::path fdata = root / "folds_data";
  fs::path ftrain = root / "folds_train";
  fs::path feval = root / "folds_eval";
  if (run_cli("synth --config " + fcfg + " --out " + fdata.string() + " --seed 8") != 0 ||
      run_cli("train --config " + fcfg + " --data " + fdata.string() + " --seed 8 --out " +
              ftrain.string()) != 0 ||
      run_cli("eval " + (ftrain / "checkpoint.gqck").string() + " --data " + fdata.string() +
              " --out " + feval.string() + " --folds 4 --seed 8") != 0) {
    detail = "fold protocol CLI run failed";
    return false;
  }
  // each fold tests exactly one distinct WSI
  std::ifstream folds(feval / "folds.tsv");
  std::string line;
  std::getline(folds, line);  // header
  std::set<std::string> tested;
  std::size_t fold_rows = 0;
  while (std::getline(folds, line)) {
    ++fold_rows;
    auto tab = line.rfind('\t');
    std::string test = line.substr(tab + 1);
    if (test.find(',') != std::string::npos) ok = false;
    tested.insert(test);
  }
  ok = ok && fold_rows == 4 && tested.size() == 4;
  os << "leave-one-out folds: " << fold_rows << " folds, " << tested.size() << " distinct test WSIs; ";

  // transfer: train set A thoroughly enough to carry signal, evaluate on B
  // sharing 30 of 60 gene names
  auto pa = accept_synth();
  auto pb = accept_synth();
  pb.seed = 4048;
  pb.gene_name_offset = 30;
  auto a = data::synth_make(pa);
  auto b = data::synth_make(pb);
  auto a_norm = data::normalize(a.expr);
  auto b_norm = data::normalize(b.expr);
  auto cfg = accept_train_config();
  cfg.epochs = 40;
  auto res = trainer::train(a, a_norm, {"W00", "W01"}, nullptr, cfg);
  auto restored = trainer::restore_model(res.checkpoint);
  auto gene_f = trainer::make_gene_featurizer(restored.gene_spec, &restored.net.params);
  auto img_f = trainer::make_image_featurizer(restored.img_spec, b.manifest, &restored.net.params);
  std::vector<std::size_t> intersection;
  auto entry =
      eval::transfer_eval(restored.net, gene_f, img_f, a.genes, b, b_norm, &intersection);
  bool inter_ok = intersection.size() == 30 && entry.scope_genes == 30;
  bool pcc_ok = entry.all.mean_pcc > 0.0;
  ok = ok && inter_ok && pcc_ok;
  os << "transfer intersection " << intersection.size() << " (= 30), transfer PCC(ALL) "
     << entry.all.mean_pcc << " (> 0)";
  detail = os.str();
  return ok;
}

// ---------------------------------------------------------------------------
// Criterion 8: normalization property suite.
bool criterion_normalization(std::string& detail) {
  std::ostringstream os;
  bool ok = true;

  // hand-derived case, exact within 1e-12
  data::ExpressionMatrix raw(1, 3, data::ExprState::raw);
  double e = std::exp(1.0);
  raw.cell(0, 0) = 0.0;
  raw.cell(0, 1) = e - 1.0;
  raw.cell(0, 2) = e * e - 1.0;
  auto hand = data::normalize(raw);
  double gap = std::max({std::abs(hand.cell(0, 0) - 0.0), std::abs(hand.cell(0, 1) - 0.5),
                         std::abs(hand.cell(0, 2) - 1.0)});
  ok = ok && gap <= 1e-12;
  os << "hand case gap " << gap << " (<= 1e-12); ";

  // property sweep: range, constant rows, monotonicity
  num::Rng rng(515);
  bool range_ok = true, const_ok = true, mono_ok = true;
  for (int trial = 0; trial < 50; ++trial) {
    std::size_t cols = 2 + rng.below(12);
    data::ExpressionMatrix m(6, cols, data::ExprState::raw);
    for (std::size_t r = 0; r < 6; ++r) {
      bool constant = r == 3;
      double c0 = std::floor(20.0 * rng.uniform());
      for (std::size_t c = 0; c < cols; ++c)
        m.cell(r, c) = constant ? c0 : std::floor(100.0 * rng.uniform());
    }
    auto n = data::normalize(m);
    for (std::size_t r = 0; r < 6; ++r)
      for (std::size_t c = 0; c < cols; ++c) {
        range_ok = range_ok && n.cell(r, c) >= 0.0 && n.cell(r, c) <= 1.0;
        if (r == 3) const_ok = const_ok && n.cell(r, c) == 0.0;
        for (std::size_t c2 = 0; c2 < cols; ++c2)
          if (m.cell(r, c) < m.cell(r, c2)) mono_ok = mono_ok && n.cell(r, c) <= n.cell(r, c2);
      }
  }
  ok = ok && range_ok && const_ok && mono_ok;
  os << "range in [0,1]: " << range_ok << ", constant rows zero: " << const_ok
     << ", monotone: " << mono_ok;
  detail = os.str();
  return ok;
}

struct Criterion {
  const char* name;
  bool (*fn)(std::string&);
};

}  // namespace

int main() {
  const Criterion criteria[] = {
      {"1 gradient fidelity", criterion_gradients},
      {"2 metric oracle", criterion_metric_oracle},
      {"3 synthetic learning", criterion_synthetic_learning},
      {"4 unseen-gene generalization", criterion_unseen_genes},
      {"5 mode parity and equivariance", criterion_mode_parity},
      {"6 determinism and persistence", criterion_determinism},
      {"7 protocol shape", criterion_protocol_shape},
      {"8 normalization", criterion_normalization},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    std::string detail;
    bool ok = false;
    try {
      ok = c.fn(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    std::printf("%s criterion %s: %s\n", ok ? "PASS" : "FAIL", c.name, detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  std::printf("%d/8 criteria passed\n", 8 - failures);
  return failures;
}
