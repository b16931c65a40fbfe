#include "genequery/cli/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <thread>

#include "genequery/evalkit/evaluate.hpp"
#include "genequery/evalkit/kmeans.hpp"
#include "genequery/model/predict.hpp"
#include "genequery/stdata/io.hpp"
#include "genequery/stdata/normalize.hpp"
#include "genequery/stdata/splits.hpp"
#include "genequery/stdata/synth.hpp"
#include "genequery/trainer/train.hpp"

namespace gq::cli {

namespace fs = std::filesystem;

namespace {

const std::map<std::string, std::string>& default_values() {
  static const std::map<std::string, std::string> defaults = {
      {"mode", "gene_aware"},
      {"d_fuse", "256"},
      {"layers", "2"},
      {"heads", "8"},
      {"max_len", "0"},
      {"pos_embedding", "0"},
      {"pos_table", "64"},
      {"epochs", "100"},
      {"batch_size", "100"},
      {"lr", "0.001"},
      {"eval_fraction", "0.1"},
      {"seed", "1"},
      {"gene_featurizer", "hashed_text"},
      {"gene_embed_dim", "64"},
      {"gene_vocab", "8192"},
      {"gene_trainable", "0"},
      {"gene_precomputed", ""},
      {"img_featurizer", "passthrough"},
      {"img_output_dim", "16"},
      {"img_trainable", "0"},
      {"img_precomputed", ""},
      {"synth_wsis", "2"},
      {"synth_spots", "200"},
      {"synth_genes", "60"},
      {"synth_feature_dim", "16"},
      {"synth_noise_sd", "1"},
      {"synth_gene_name_offset", "0"},
  };
  return defaults;
}

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

trainer::TrainConfig train_config_from(const RunConfig& rc) {
  trainer::TrainConfig cfg;
  cfg.epochs = rc.get_size("epochs");
  cfg.batch_size = rc.get_size("batch_size");
  cfg.lr = rc.get_double("lr");
  cfg.seed = rc.get_u64("seed");
  cfg.eval_fraction = rc.get_double("eval_fraction");
  cfg.model.mode = model::mode_from(rc.get("mode"));
  cfg.model.d_fuse = rc.get_size("d_fuse");
  cfg.model.layers = rc.get_size("layers");
  cfg.model.heads = rc.get_size("heads");
  cfg.model.max_len = rc.get_size("max_len");
  cfg.model.pos_embedding = rc.get_bool("pos_embedding");
  cfg.model.pos_table = rc.get_size("pos_table");
  cfg.model.seed = rc.get_u64("seed");
  cfg.gene_feat.kind = feat::feat_kind_from(rc.get("gene_featurizer"));
  cfg.gene_feat.output_dim = rc.get_size("gene_embed_dim");
  cfg.gene_feat.vocab_buckets = rc.get_size("gene_vocab");
  cfg.gene_feat.trainable = rc.get_bool("gene_trainable");
  cfg.gene_feat.seed = rc.get_u64("seed");
  cfg.gene_feat.source = rc.get("gene_precomputed");
  cfg.img_feat.kind = feat::feat_kind_from(rc.get("img_featurizer"));
  cfg.img_feat.output_dim = rc.get_size("img_output_dim");
  cfg.img_feat.trainable = rc.get_bool("img_trainable");
  cfg.img_feat.seed = rc.get_u64("seed");
  cfg.img_feat.source = rc.get("img_precomputed");
  return cfg;
}

RunConfig load_config(const CommonOpts& opts) {
  RunConfig rc = opts.config_path.empty() ? RunConfig::defaults()
                                          : RunConfig::from_file(opts.config_path);
  if (opts.seed) rc.set("seed", std::to_string(*opts.seed));
  if (opts.mode) rc.set("mode", *opts.mode);
  return rc;
}

void write_loss_log(const std::vector<trainer::EpochLog>& log, const fs::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) fail(errc::data, "cannot write " + path.string());
  f << "epoch\ttrain_mse\teval_mse\n";
  for (const auto& row : log) {
    f << row.epoch << "\t" << fmt_g(row.train_mse) << "\t"
      << (row.eval_mse ? fmt_g(*row.eval_mse) : "-") << "\n";
  }
}

void write_folds_tsv(const std::vector<data::Fold>& folds, const fs::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) fail(errc::data, "cannot write " + path.string());
  f << "fold\ttrain\ttest\n";
  for (std::size_t i = 0; i < folds.size(); ++i) {
    f << i << "\t";
    for (std::size_t j = 0; j < folds[i].train_wsis.size(); ++j)
      f << (j ? "," : "") << folds[i].train_wsis[j];
    f << "\t";
    for (std::size_t j = 0; j < folds[i].test_wsis.size(); ++j)
      f << (j ? "," : "") << folds[i].test_wsis[j];
    f << "\n";
  }
}

std::size_t thread_cap() {
  if (const char* env = std::getenv("GENEQUERY_THREADS")) {
    long v = std::atol(env);
    if (v >= 1) return static_cast<std::size_t>(v);
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw ? hw : 1;
}

struct ScopeSpec {
  std::string name;
  std::vector<std::size_t> genes;
};

ScopeSpec resolve_scope(const data::Dataset& ds, const EvalOpts& eo, std::uint64_t split_seed) {
  ScopeSpec scope;
  scope.name = eo.gene_ratio > 0.0 ? eo.scope : "all";
  if (eo.gene_ratio > 0.0) {
    auto split = data::make_gene_split(ds.n_genes(), eo.gene_ratio, split_seed);
    if (eo.scope == "seen")
      scope.genes = split.seen;
    else if (eo.scope == "unseen")
      scope.genes = split.unseen;
    else if (eo.scope == "all") {
      scope.genes.resize(ds.n_genes());
      std::iota(scope.genes.begin(), scope.genes.end(), std::size_t(0));
    } else {
      fail(errc::argument, "unknown scope: " + eo.scope);
    }
  } else {
    if (eo.scope != "all") fail(errc::argument, "--scope requires --gene-ratio");
    scope.genes.resize(ds.n_genes());
    std::iota(scope.genes.begin(), scope.genes.end(), std::size_t(0));
  }
  return scope;
}

void write_report(const eval::EvalReport& report, const std::string& scope_name,
                  const std::vector<std::string>& fold_names, const fs::path& out_dir,
                  const std::string& extra_note) {
  {
    std::ofstream f(out_dir / "report.tsv", std::ios::trunc);
    if (!f) fail(errc::data, "cannot write report.tsv");
    f << "panel\tscope\tfold\tvalue\n";
    for (std::size_t i = 0; i < report.folds.size(); ++i) {
      f << "HEG\t" << scope_name << "\t" << fold_names[i] << "\t" << fmt_g(report.folds[i].heg.mean_pcc) << "\n";
      f << "HVG\t" << scope_name << "\t" << fold_names[i] << "\t" << fmt_g(report.folds[i].hvg.mean_pcc) << "\n";
      f << "ALL\t" << scope_name << "\t" << fold_names[i] << "\t" << fmt_g(report.folds[i].all.mean_pcc) << "\n";
    }
    auto agg = [&](const char* panel, const eval::PanelAggregate& a) {
      f << panel << "\t" << scope_name << "\tmean\t" << fmt_g(a.mean) << "\n";
      f << panel << "\t" << scope_name << "\tvar\t" << fmt_g(a.var) << "\n";
      f << panel << "\t" << scope_name << "\tsd\t" << fmt_g(a.sd) << "\n";
    };
    agg("HEG", report.heg);
    agg("HVG", report.hvg);
    agg("ALL", report.all);
  }
  {
    std::ofstream f(out_dir / "report.txt", std::ios::trunc);
    if (!f) fail(errc::data, "cannot write report.txt");
    f << "genequery evaluation report\n";
    f << "scope: " << scope_name << "\n";
    f << "genes evaluated: " << (report.folds.empty() ? 0 : report.folds[0].scope_genes) << "\n";
    f << "folds: " << report.folds.size() << "\n";
    if (!extra_note.empty()) f << extra_note << "\n";
    auto line = [&](const char* panel, const eval::PanelAggregate& a) {
      f << panel << ": mean " << fmt_g(a.mean) << "  var " << fmt_g(a.var) << "  sd " << fmt_g(a.sd)
        << "\n";
    };
    line("HEG", report.heg);
    line("HVG", report.hvg);
    line("ALL", report.all);
    for (std::size_t i = 0; i < report.folds.size(); ++i) {
      const auto& e = report.folds[i];
      f << "fold " << fold_names[i] << ": HEG " << fmt_g(e.heg.mean_pcc) << " HVG "
        << fmt_g(e.hvg.mean_pcc) << " ALL " << fmt_g(e.all.mean_pcc) << " (excluded "
        << e.all.excluded << (e.all.all_excluded ? ", all excluded" : "") << ")\n";
    }
  }
}

std::string substitute_fold(const std::string& pattern, std::size_t fold) {
  std::string out = pattern;
  auto pos = out.find("{fold}");
  if (pos != std::string::npos) out.replace(pos, 6, std::to_string(fold));
  return out;
}

struct LoadedCheckpoint {
  trainer::Restored restored;
  feat::GeneFeaturizer gene_f;
  feat::ImageFeaturizer img_f;
};

LoadedCheckpoint load_for_eval(const std::string& path, const data::Manifest& manifest) {
  auto ckpt = trainer::load_checkpoint(path);
  auto restored = trainer::restore_model(ckpt);
  auto gene_f = trainer::make_gene_featurizer(restored.gene_spec, &restored.net.params);
  auto img_f = trainer::make_image_featurizer(restored.img_spec, manifest, &restored.net.params);
  return {std::move(restored), std::move(gene_f), std::move(img_f)};
}

}  // namespace

RunConfig RunConfig::defaults() {
  RunConfig rc;
  rc.values_ = default_values();
  return rc;
}

RunConfig RunConfig::from_file(const fs::path& path) {
  std::ifstream f(path);
  if (!f) fail(errc::data, "missing config file: " + path.string());
  RunConfig rc = defaults();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(errc::config, "config line " + std::to_string(lineno) + " has no '=': " + line);
    rc.set(line.substr(0, eq), line.substr(eq + 1));
  }
  return rc;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!default_values().count(key)) fail(errc::config, "unknown config key: " + key);
  values_[key] = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) fail(errc::config, "unknown config key: " + key);
  return it->second;
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  try {
    return std::stoull(get(key));
  } catch (const std::exception&) {
    fail(errc::config, "config key " + key + " is not an integer: " + get(key));
  }
}

std::size_t RunConfig::get_size(const std::string& key) const {
  return static_cast<std::size_t>(get_u64(key));
}

double RunConfig::get_double(const std::string& key) const {
  try {
    return std::stod(get(key));
  } catch (const std::exception&) {
    fail(errc::config, "config key " + key + " is not a number: " + get(key));
  }
}

bool RunConfig::get_bool(const std::string& key) const {
  const auto& v = get(key);
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  fail(errc::config, "config key " + key + " is not a boolean: " + v);
}

void RunConfig::write_resolved(const fs::path& out_dir) const {
  fs::create_directories(out_dir);
  std::ofstream f(out_dir / "config_resolved.txt", std::ios::trunc);
  if (!f) fail(errc::data, "cannot write config_resolved.txt");
  for (const auto& [k, v] : values_) f << k << "=" << v << "\n";
}

int exit_code_for(const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) {
    switch (err->kind()) {
      case errc::argument:
      case errc::config:
        return 1;
      case errc::numeric:
        return 3;
      default:
        return 2;
    }
  }
  return 2;
}

int cmd_synth(const CommonOpts& opts) {
  auto rc = load_config(opts);
  data::SynthParams p;
  p.n_wsis = rc.get_size("synth_wsis");
  p.spots_per_wsi = rc.get_size("synth_spots");
  p.m_genes = rc.get_size("synth_genes");
  p.feature_dim = rc.get_size("synth_feature_dim");
  p.noise_sd = rc.get_double("synth_noise_sd");
  p.seed = rc.get_u64("seed");
  p.gene_name_offset = rc.get_size("synth_gene_name_offset");
  data::synth_generate(p, opts.out_dir);
  rc.write_resolved(opts.out_dir);
  return 0;
}

int cmd_train(const CommonOpts& opts, std::size_t folds, double gene_ratio) {
  auto rc = load_config(opts);
  auto cfg = train_config_from(rc);
  auto ds = data::load_dataset(opts.data_dir);
  auto norm = data::normalize(ds.expr);

  std::vector<std::size_t> seen;
  const std::vector<std::size_t>* seen_ptr = nullptr;
  if (gene_ratio > 0.0) {
    seen = data::make_gene_split(ds.n_genes(), gene_ratio, cfg.seed).seen;
    seen_ptr = &seen;
  }

  fs::create_directories(opts.out_dir);
  rc.write_resolved(opts.out_dir);

  if (folds > 0) {
    auto plan = data::make_wsi_folds(ds.manifest.wsi_ids, folds, cfg.seed);
    write_folds_tsv(plan, fs::path(opts.out_dir) / "folds.tsv");
    for (std::size_t i = 0; i < plan.size(); ++i) {
      auto fold_dir = fs::path(opts.out_dir) / ("fold" + std::to_string(i));
      fs::create_directories(fold_dir);
      auto res = trainer::train(ds, norm, plan[i].train_wsis, seen_ptr, cfg);
      trainer::save_checkpoint(res.checkpoint, fold_dir / "checkpoint.gqck");
      write_loss_log(res.log, fold_dir / "loss_log.tsv");
    }
  } else {
    auto res = trainer::train(ds, norm, ds.manifest.wsi_ids, seen_ptr, cfg);
    trainer::save_checkpoint(res.checkpoint, fs::path(opts.out_dir) / "checkpoint.gqck");
    write_loss_log(res.log, fs::path(opts.out_dir) / "loss_log.tsv");
  }
  return 0;
}

int cmd_eval(const CommonOpts& opts, const EvalOpts& eo) {
  auto ds = data::load_dataset(opts.data_dir);
  auto norm = data::normalize(ds.expr);
  fs::create_directories(opts.out_dir);
  if (!opts.config_path.empty() || opts.seed || opts.mode) load_config(opts).write_resolved(opts.out_dir);

  // Transfer protocol: the checkpoint's training library comes from
  // --data; context, truth and query metadata come from the transfer dir.
  if (!eo.transfer_dir.empty()) {
    auto b = data::load_dataset(eo.transfer_dir);
    auto b_norm = data::normalize(b.expr);
    auto lc = load_for_eval(eo.checkpoint, b.manifest);
    std::vector<std::size_t> intersection;
    auto entry = eval::transfer_eval(lc.restored.net, lc.gene_f, lc.img_f, ds.genes, b, b_norm,
                                     &intersection);
    auto report = eval::aggregate_folds({entry});
    write_report(report, "transfer", {"transfer"}, opts.out_dir,
                 "intersection genes: " + std::to_string(intersection.size()));
    return 0;
  }

  auto first = load_for_eval(substitute_fold(eo.checkpoint, 0), ds.manifest);
  std::uint64_t split_seed = opts.seed ? *opts.seed : first.restored.train_seed;
  auto scope = resolve_scope(ds, eo, split_seed);

  if (eo.folds > 0) {
    auto plan = data::make_wsi_folds(ds.manifest.wsi_ids, eo.folds, split_seed);
    write_folds_tsv(plan, fs::path(opts.out_dir) / "folds.tsv");
    std::vector<eval::EvalEntry> entries(plan.size());
    std::vector<std::string> names(plan.size());
    std::size_t cap = std::min(thread_cap(), plan.size());
    for (std::size_t base = 0; base < plan.size(); base += cap) {
      std::size_t hi = std::min(plan.size(), base + cap);
      std::vector<std::thread> pool;
      for (std::size_t i = base; i < hi; ++i) {
        pool.emplace_back([&, i] {
          auto lc = load_for_eval(substitute_fold(eo.checkpoint, i), ds.manifest);
          entries[i] = eval::evaluate(lc.restored.net, lc.gene_f, lc.img_f, ds, norm,
                                      plan[i].test_wsis, scope.genes);
        });
      }
      for (auto& t : pool) t.join();
    }
    for (std::size_t i = 0; i < plan.size(); ++i) names[i] = std::to_string(i);
    auto report = eval::aggregate_folds(std::move(entries));
    write_report(report, scope.name, names, opts.out_dir, "");
  } else {
    auto entry = eval::evaluate(first.restored.net, first.gene_f, first.img_f, ds, norm,
                                ds.manifest.wsi_ids, scope.genes);
    auto report = eval::aggregate_folds({entry});
    write_report(report, scope.name, {"0"}, opts.out_dir, "");
  }
  return 0;
}

int cmd_predict(const CommonOpts& opts, const std::string& checkpoint,
                const std::string& genes_csv) {
  if (genes_csv.empty()) fail(errc::argument, "predict: no gene names given");
  auto ds = data::load_dataset(opts.data_dir);
  auto lc = load_for_eval(checkpoint, ds.manifest);

  std::vector<data::GeneRecord> queries;
  std::size_t start = 0;
  while (start <= genes_csv.size()) {
    auto comma = genes_csv.find(',', start);
    std::string name =
        genes_csv.substr(start, comma == std::string::npos ? comma : comma - start);
    start = comma == std::string::npos ? genes_csv.size() + 1 : comma + 1;
    if (name.empty()) continue;
    if (auto idx = ds.genes.index_of(name))
      queries.push_back(ds.genes.record(*idx));
    else
      queries.push_back({name, ""});  // unseen gene: text-only query
  }
  if (queries.empty()) fail(errc::argument, "predict: no gene names given");

  fs::create_directories(opts.out_dir);
  std::ofstream f(fs::path(opts.out_dir) / "predictions.tsv", std::ios::trunc);
  if (!f) fail(errc::data, "cannot write predictions.tsv");
  f << "spot_id\tx\ty\tgene\tvalue\n";
  for (const auto& wsi : ds.manifest.wsi_ids) {
    auto p = model::predict_wsi(lc.restored.net, lc.gene_f, lc.img_f, ds, wsi, queries);
    auto range = ds.rows_of(wsi);
    for (std::size_t i = 0; i < range.count; ++i) {
      const auto& spot = ds.spots[range.begin + i];
      for (std::size_t j = 0; j < queries.size(); ++j)
        f << spot.spot_id << "\t" << spot.x << "\t" << spot.y << "\t" << queries[j].name << "\t"
          << fmt_g(static_cast<double>(p.preds.at(i, j))) << "\n";
    }
  }
  return 0;
}

int cmd_export_latent(const CommonOpts& opts, const std::string& checkpoint, std::size_t k) {
  auto ds = data::load_dataset(opts.data_dir);
  auto lc = load_for_eval(checkpoint, ds.manifest);
  std::vector<data::GeneRecord> queries(ds.genes.records());

  data::MatrixF32 latents;
  latents.cols = lc.restored.net.cfg.d_fuse;
  std::vector<std::string> spot_ids;
  for (const auto& wsi : ds.manifest.wsi_ids) {
    auto p = model::predict_wsi(lc.restored.net, lc.gene_f, lc.img_f, ds, wsi, queries, true);
    auto range = ds.rows_of(wsi);
    for (std::size_t i = 0; i < range.count; ++i) {
      spot_ids.push_back(ds.spots[range.begin + i].spot_id);
      for (std::size_t c = 0; c < latents.cols; ++c)
        latents.values.push_back(p.latents.at(i, c));
    }
  }
  latents.rows = spot_ids.size();

  num::Tensor<float> pts({latents.rows, latents.cols}, latents.values);
  std::uint64_t seed = opts.seed ? *opts.seed : lc.restored.train_seed;
  auto labels = eval::kmeans(pts, k, seed);

  fs::create_directories(opts.out_dir);
  data::write_matrix_f32(fs::path(opts.out_dir) / "latents.f32", latents);
  std::ofstream f(fs::path(opts.out_dir) / "labels.tsv", std::ios::trunc);
  if (!f) fail(errc::data, "cannot write labels.tsv");
  f << "spot_id\tlabel\n";
  for (std::size_t i = 0; i < spot_ids.size(); ++i) f << spot_ids[i] << "\t" << labels[i] << "\n";
  return 0;
}

}  // namespace gq::cli
