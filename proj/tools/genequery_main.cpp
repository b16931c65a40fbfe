// genequery command-line tool: synthetic data generation, training,
// evaluation, prediction export and latent export, all reproducible from a
// seed and a plain-text config.

#include <CLI11.hpp>
#include <cstdio>
#include <exception>

#include "genequery/cli/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"genequery: spatial gene expression prediction from histology spots"};
  app.require_subcommand(1);

  gq::cli::CommonOpts common;

  auto add_common = [&](CLI::App* sub, bool need_data, bool need_out) {
    sub->add_option("--config", common.config_path, "key=value run configuration file");
    auto* data = sub->add_option("--data", common.data_dir, "dataset directory");
    auto* out = sub->add_option("--out", common.out_dir, "output directory");
    if (need_data) data->required();
    if (need_out) out->required();
    sub->add_option_function<std::string>(
        "--seed", [&](const std::string& s) { common.seed = std::stoull(s); }, "seed override");
    sub->add_option_function<std::string>(
        "--mode", [&](const std::string& s) { common.mode = s; }, "spot_aware | gene_aware");
  };

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common(synth, false, true);

  auto* train = app.add_subcommand("train", "train a model");
  add_common(train, true, true);
  std::size_t train_folds = 0;
  double train_ratio = 0.0;
  train->add_option("--folds", train_folds, "train one model per cross-validation fold");
  train->add_option("--gene-ratio", train_ratio, "restrict training to a seen-gene split");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval, true, true);
  gq::cli::EvalOpts eval_opts;
  eval->add_option("checkpoint", eval_opts.checkpoint, "checkpoint path ({fold} substituted)")
      ->required();
  eval->add_option("--folds", eval_opts.folds, "evaluate across fold test sets");
  eval->add_option("--gene-ratio", eval_opts.gene_ratio, "gene split ratio for scoped reports");
  eval->add_option("--scope", eval_opts.scope, "seen | unseen | all");
  eval->add_option("--transfer", eval_opts.transfer_dir, "evaluate on another dataset directory");

  auto* predict = app.add_subcommand("predict", "per-spot predictions for named genes");
  add_common(predict, true, true);
  std::string predict_ckpt, genes_csv;
  predict->add_option("checkpoint", predict_ckpt, "checkpoint path")->required();
  predict->add_option("--genes", genes_csv, "comma-separated gene names")->required();

  auto* latent = app.add_subcommand("export-latent", "per-spot latents plus k-means labels");
  add_common(latent, true, true);
  std::string latent_ckpt;
  std::size_t k = 0;
  latent->add_option("checkpoint", latent_ckpt, "checkpoint path")->required();
  latent->add_option("--k", k, "cluster count")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }

  try {
    if (app.got_subcommand(synth)) return gq::cli::cmd_synth(common);
    if (app.got_subcommand(train)) return gq::cli::cmd_train(common, train_folds, train_ratio);
    if (app.got_subcommand(eval)) return gq::cli::cmd_eval(common, eval_opts);
    if (app.got_subcommand(predict)) return gq::cli::cmd_predict(common, predict_ckpt, genes_csv);
    if (app.got_subcommand(latent)) return gq::cli::cmd_export_latent(common, latent_ckpt, k);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return gq::cli::exit_code_for(e);
  }
  return 1;
}
