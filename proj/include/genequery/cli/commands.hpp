#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace gq::cli {

// Plain-text run configuration: key=value lines, defaults applied, unknown
// keys rejected. The fully resolved config is echoed into every output
// directory for provenance.
class RunConfig {
 public:
  static RunConfig defaults();
  static RunConfig from_file(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);  // rejects unknown keys
  const std::string& get(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  void write_resolved(const std::filesystem::path& out_dir) const;

 private:
  std::map<std::string, std::string> values_;
};

struct CommonOpts {
  std::string config_path;  // optional
  std::string data_dir;
  std::string out_dir;
  std::optional<std::uint64_t> seed;  // overrides config seed
  std::optional<std::string> mode;    // overrides config mode
};

struct EvalOpts {
  std::string checkpoint;  // may contain {fold}
  std::size_t folds = 0;   // 0 = single evaluation over all WSIs
  double gene_ratio = 0.0; // 0 = no gene split
  std::string scope = "all";  // seen | unseen | all
  std::string transfer_dir;   // non-empty = transfer protocol
};

int cmd_synth(const CommonOpts& opts);
int cmd_train(const CommonOpts& opts, std::size_t folds, double gene_ratio);
int cmd_eval(const CommonOpts& opts, const EvalOpts& eval_opts);
int cmd_predict(const CommonOpts& opts, const std::string& checkpoint, const std::string& genes_csv);
int cmd_export_latent(const CommonOpts& opts, const std::string& checkpoint, std::size_t k);

// Exit-code contract: 0 success, 1 usage/argument, 2 data, 3 numeric.
int exit_code_for(const std::exception& e);

}  // namespace gq::cli
