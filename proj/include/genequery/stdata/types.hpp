#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "genequery/common.hpp"

namespace gq::data {

struct GeneRecord {
  std::string name;         // unique token, no tab/newline
  std::string description;  // free text, may be empty

  bool operator==(const GeneRecord&) const = default;
};

// Ordered gene records with a name -> index map.
class GeneLibrary {
 public:
  GeneLibrary() = default;

  static GeneLibrary from_records(std::vector<GeneRecord> records) {
    GeneLibrary lib;
    lib.records_ = std::move(records);
    for (std::size_t i = 0; i < lib.records_.size(); ++i) {
      const auto& r = lib.records_[i];
      if (r.name.empty()) fail(errc::data, "gene name empty at index " + std::to_string(i));
      if (r.name.find('\t') != std::string::npos || r.name.find('\n') != std::string::npos)
        fail(errc::data, "gene name contains tab/newline: " + r.name);
      if (!lib.index_.emplace(r.name, i).second)
        fail(errc::data, "duplicate gene name: " + r.name);
    }
    return lib;
  }

  std::size_t size() const { return records_.size(); }
  const GeneRecord& record(std::size_t i) const { return records_[i]; }
  const std::vector<GeneRecord>& records() const { return records_; }

  std::optional<std::size_t> index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  bool operator==(const GeneLibrary& o) const { return records_ == o.records_; }

 private:
  std::vector<GeneRecord> records_;
  std::unordered_map<std::string, std::size_t> index_;
};

enum class PayloadKind { patch, feature };

struct SpotRecord {
  std::string spot_id;
  std::string wsi_id;
  int x = 0;
  int y = 0;
  std::vector<std::uint8_t> patch;  // payload_kind == patch (h*w*3 bytes)
  std::vector<float> feature;       // payload_kind == feature

  bool operator==(const SpotRecord&) const = default;
};

enum class ExprState { raw, normalized };

// Spots x genes values. Stored as double in memory (normalization math needs
// the precision); serialized as 32-bit floats. All reads go through at() so a
// test harness can observe which cells training touches.
class ExpressionMatrix {
 public:
  ExpressionMatrix() = default;
  ExpressionMatrix(std::size_t rows, std::size_t cols, ExprState state)
      : rows_(rows), cols_(cols), state_(state), v_(rows * cols, 0.0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  ExprState state() const { return state_; }

  double at(std::size_t r, std::size_t c) const {
    if (on_read_) on_read_(r, c);
    return v_[r * cols_ + c];
  }

  // Writer-side access; does not notify the read observer.
  double& cell(std::size_t r, std::size_t c) { return v_[r * cols_ + c]; }
  double cell(std::size_t r, std::size_t c) const { return v_[r * cols_ + c]; }

  void set_read_observer(std::function<void(std::size_t, std::size_t)> f) { on_read_ = std::move(f); }

  bool values_equal(const ExpressionMatrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && state_ == o.state_ && v_ == o.v_;
  }

 private:
  std::size_t rows_ = 0, cols_ = 0;
  ExprState state_ = ExprState::raw;
  std::vector<double> v_;
  std::function<void(std::size_t, std::size_t)> on_read_;
};

struct Manifest {
  PayloadKind payload_kind = PayloadKind::feature;
  std::size_t patch_h = 0;
  std::size_t patch_w = 0;
  std::size_t feature_dim = 0;
  std::size_t n_genes = 0;
  std::vector<std::string> wsi_ids;
};

struct RowRange {
  std::size_t begin = 0;
  std::size_t count = 0;
};

// A loaded dataset: spots are concatenated in manifest wsi order and
// expression rows follow the same order.
struct Dataset {
  Manifest manifest;
  GeneLibrary genes;
  std::vector<SpotRecord> spots;
  ExpressionMatrix expr;

  RowRange rows_of(const std::string& wsi_id) const {
    std::size_t begin = 0;
    for (const auto& id : manifest.wsi_ids) {
      std::size_t count = 0;
      while (begin + count < spots.size() && spots[begin + count].wsi_id == id) ++count;
      if (id == wsi_id) return {begin, count};
      begin += count;
    }
    fail(errc::not_found, "unknown wsi id: " + wsi_id);
  }

  std::size_t n_spots() const { return spots.size(); }
  std::size_t n_genes() const { return genes.size(); }

  std::vector<RowRange> wsi_row_ranges() const {
    std::vector<RowRange> out;
    out.reserve(manifest.wsi_ids.size());
    for (const auto& id : manifest.wsi_ids) out.push_back(rows_of(id));
    return out;
  }
};

}  // namespace gq::data
