#include "genequery/stdata/io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace gq::data {

namespace fs = std::filesystem;

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is, const std::string& what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) fail(errc::data, "truncated " + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32(std::ostream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(os, bits);
}

float get_f32(std::istream& is, const std::string& what) {
  std::uint32_t bits = get_u32(is, what);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

std::ifstream open_in(const fs::path& path, bool binary) {
  std::ifstream f(path, binary ? std::ios::binary : std::ios::in);
  if (!f) fail(errc::data, "missing file: " + path.string());
  return f;
}

std::ofstream open_out(const fs::path& path, bool binary) {
  std::ofstream f(path, binary ? (std::ios::binary | std::ios::trunc) : std::ios::trunc);
  if (!f) fail(errc::data, "cannot write file: " + path.string());
  return f;
}

void check_magic(std::istream& is, const char* magic, const fs::path& path) {
  char got[4];
  if (!is.read(got, 4) || std::memcmp(got, magic, 4) != 0)
    fail(errc::data, std::string("bad magic in ") + path.string() + " (expected " + magic + ")");
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

// Strips a trailing \r so CRLF inputs load too; we always write LF.
std::string chomp(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace

void write_matrix_f32(const fs::path& path, const MatrixF32& m) {
  if (m.values.size() != m.rows * m.cols) fail(errc::shape, "matrix values do not match dims");
  auto f = open_out(path, true);
  f.write("GQEX", 4);
  put_u32(f, 1);
  put_u32(f, static_cast<std::uint32_t>(m.rows));
  put_u32(f, static_cast<std::uint32_t>(m.cols));
  for (float v : m.values) put_f32(f, v);
  if (!f) fail(errc::data, "write failed: " + path.string());
}

MatrixF32 read_matrix_f32(const fs::path& path) {
  auto f = open_in(path, true);
  check_magic(f, "GQEX", path);
  std::uint32_t version = get_u32(f, path.string());
  if (version != 1)
    fail(errc::data, "unsupported version " + std::to_string(version) + " in " + path.string());
  MatrixF32 m;
  m.rows = get_u32(f, path.string());
  m.cols = get_u32(f, path.string());
  m.values.resize(m.rows * m.cols);
  for (auto& v : m.values) v = get_f32(f, path.string());
  return m;
}

void write_patches_u8(const fs::path& path, const PatchStack& p) {
  if (p.bytes.size() != p.count * p.h * p.w * 3) fail(errc::shape, "patch bytes do not match dims");
  auto f = open_out(path, true);
  f.write("GQPX", 4);
  put_u32(f, 1);
  put_u32(f, static_cast<std::uint32_t>(p.count));
  put_u32(f, static_cast<std::uint32_t>(p.h));
  put_u32(f, static_cast<std::uint32_t>(p.w));
  put_u32(f, 3);
  f.write(reinterpret_cast<const char*>(p.bytes.data()),
          static_cast<std::streamsize>(p.bytes.size()));
  if (!f) fail(errc::data, "write failed: " + path.string());
}

PatchStack read_patches_u8(const fs::path& path) {
  auto f = open_in(path, true);
  check_magic(f, "GQPX", path);
  std::uint32_t version = get_u32(f, path.string());
  if (version != 1)
    fail(errc::data, "unsupported version " + std::to_string(version) + " in " + path.string());
  PatchStack p;
  p.count = get_u32(f, path.string());
  p.h = get_u32(f, path.string());
  p.w = get_u32(f, path.string());
  std::uint32_t channels = get_u32(f, path.string());
  if (channels != 3) fail(errc::data, "expected 3 channels in " + path.string());
  p.bytes.resize(p.count * p.h * p.w * 3);
  if (!f.read(reinterpret_cast<char*>(p.bytes.data()), static_cast<std::streamsize>(p.bytes.size())))
    fail(errc::data, "truncated " + path.string());
  return p;
}

namespace {

Manifest load_manifest(const fs::path& dir) {
  auto f = open_in(dir / "manifest.txt", false);
  Manifest m;
  bool have_kind = false;
  std::string line;
  while (std::getline(f, line)) {
    line = chomp(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) fail(errc::data, "manifest line without '=': " + line);
    std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    if (key == "payload_kind") {
      have_kind = true;
      if (val == "patch")
        m.payload_kind = PayloadKind::patch;
      else if (val == "feature")
        m.payload_kind = PayloadKind::feature;
      else
        fail(errc::data, "unknown payload_kind: " + val);
    } else if (key == "patch_h") {
      m.patch_h = std::stoul(val);
    } else if (key == "patch_w") {
      m.patch_w = std::stoul(val);
    } else if (key == "feature_dim") {
      m.feature_dim = std::stoul(val);
    } else if (key == "n_genes") {
      m.n_genes = std::stoul(val);
    } else if (key == "wsi_ids") {
      std::stringstream ss(val);
      std::string id;
      while (std::getline(ss, id, ',')) m.wsi_ids.push_back(id);
    } else {
      fail(errc::data, "unknown manifest key: " + key);
    }
  }
  if (!have_kind) fail(errc::data, "manifest missing payload_kind");
  if (m.wsi_ids.empty()) fail(errc::data, "manifest lists no wsi_ids");
  return m;
}

GeneLibrary load_genes(const fs::path& dir) {
  auto f = open_in(dir / "genes.tsv", false);
  std::vector<GeneRecord> records;
  std::string line;
  while (std::getline(f, line)) {
    line = chomp(line);
    if (line.empty()) continue;
    auto cells = split_tabs(line);
    GeneRecord r;
    r.name = cells[0];
    if (cells.size() > 1) r.description = cells[1];
    records.push_back(std::move(r));
  }
  return GeneLibrary::from_records(std::move(records));
}

}  // namespace

Dataset load_dataset(const fs::path& dir) {
  Dataset ds;
  ds.manifest = load_manifest(dir);
  ds.genes = load_genes(dir);
  if (ds.manifest.n_genes != ds.genes.size())
    fail(errc::data, "manifest n_genes " + std::to_string(ds.manifest.n_genes) +
                         " does not match genes.tsv count " + std::to_string(ds.genes.size()));

  struct WsiBlock {
    std::vector<SpotRecord> spots;
    MatrixF32 expr;
  };
  std::vector<WsiBlock> blocks;
  for (const auto& wsi : ds.manifest.wsi_ids) {
    WsiBlock blk;
    auto f = open_in(dir / wsi / "spots.tsv", false);
    std::string line;
    while (std::getline(f, line)) {
      line = chomp(line);
      if (line.empty()) continue;
      auto cells = split_tabs(line);
      if (cells.size() != 3) fail(errc::data, "bad spots.tsv line in " + wsi + ": " + line);
      SpotRecord s;
      s.spot_id = cells[0];
      s.wsi_id = wsi;
      s.x = std::stoi(cells[1]);
      s.y = std::stoi(cells[2]);
      blk.spots.push_back(std::move(s));
    }
    blk.expr = read_matrix_f32(dir / wsi / "expression.f32");
    if (blk.expr.rows != blk.spots.size())
      fail(errc::data, "expression row count " + std::to_string(blk.expr.rows) +
                           " does not match spot count " + std::to_string(blk.spots.size()) +
                           " for wsi " + wsi);
    if (blk.expr.cols != ds.genes.size())
      fail(errc::data, "expression column count " + std::to_string(blk.expr.cols) +
                           " does not match gene count " + std::to_string(ds.genes.size()) +
                           " for wsi " + wsi);

    if (ds.manifest.payload_kind == PayloadKind::feature) {
      auto feats = read_matrix_f32(dir / wsi / "features.f32");
      if (feats.rows != blk.spots.size())
        fail(errc::data, "feature row count " + std::to_string(feats.rows) +
                             " does not match spot count " + std::to_string(blk.spots.size()) +
                             " for wsi " + wsi);
      if (feats.cols != ds.manifest.feature_dim)
        fail(errc::data, "feature dim " + std::to_string(feats.cols) + " does not match manifest " +
                             std::to_string(ds.manifest.feature_dim) + " for wsi " + wsi);
      for (std::size_t i = 0; i < blk.spots.size(); ++i)
        blk.spots[i].feature.assign(feats.values.begin() + static_cast<std::ptrdiff_t>(i * feats.cols),
                                    feats.values.begin() + static_cast<std::ptrdiff_t>((i + 1) * feats.cols));
    } else {
      auto patches = read_patches_u8(dir / wsi / "patches.u8");
      if (patches.count != blk.spots.size())
        fail(errc::data, "patch count " + std::to_string(patches.count) +
                             " does not match spot count " + std::to_string(blk.spots.size()) +
                             " for wsi " + wsi);
      if (patches.h != ds.manifest.patch_h || patches.w != ds.manifest.patch_w)
        fail(errc::data, "patch dims " + std::to_string(patches.h) + "x" + std::to_string(patches.w) +
                             " do not match manifest " + std::to_string(ds.manifest.patch_h) + "x" +
                             std::to_string(ds.manifest.patch_w) + " for wsi " + wsi);
      std::size_t per = patches.h * patches.w * 3;
      for (std::size_t i = 0; i < blk.spots.size(); ++i)
        blk.spots[i].patch.assign(patches.bytes.begin() + static_cast<std::ptrdiff_t>(i * per),
                                  patches.bytes.begin() + static_cast<std::ptrdiff_t>((i + 1) * per));
    }
    blocks.push_back(std::move(blk));
  }

  std::size_t total = 0;
  for (const auto& b : blocks) total += b.spots.size();
  ds.expr = ExpressionMatrix(total, ds.genes.size(), ExprState::raw);
  std::size_t row = 0;
  for (auto& b : blocks) {
    for (std::size_t i = 0; i < b.spots.size(); ++i) {
      for (std::size_t j = 0; j < ds.genes.size(); ++j) {
        double v = static_cast<double>(b.expr.values[i * b.expr.cols + j]);
        if (v < 0.0)
          fail(errc::data, "negative raw count " + std::to_string(v) + " at spot " +
                               b.spots[i].spot_id + " gene " + ds.genes.record(j).name);
        ds.expr.cell(row, j) = v;
      }
      ds.spots.push_back(std::move(b.spots[i]));
      ++row;
    }
  }
  return ds;
}

void save_dataset(const Dataset& ds, const fs::path& dir) {
  fs::create_directories(dir);
  {
    auto f = open_out(dir / "manifest.txt", false);
    f << "payload_kind=" << (ds.manifest.payload_kind == PayloadKind::patch ? "patch" : "feature")
      << "\n";
    if (ds.manifest.payload_kind == PayloadKind::patch)
      f << "patch_h=" << ds.manifest.patch_h << "\npatch_w=" << ds.manifest.patch_w << "\n";
    else
      f << "feature_dim=" << ds.manifest.feature_dim << "\n";
    f << "n_genes=" << ds.genes.size() << "\n";
    f << "wsi_ids=";
    for (std::size_t i = 0; i < ds.manifest.wsi_ids.size(); ++i)
      f << (i ? "," : "") << ds.manifest.wsi_ids[i];
    f << "\n";
  }
  {
    auto f = open_out(dir / "genes.tsv", false);
    for (const auto& r : ds.genes.records()) f << r.name << "\t" << r.description << "\n";
  }
  for (const auto& wsi : ds.manifest.wsi_ids) {
    auto range = ds.rows_of(wsi);
    fs::create_directories(dir / wsi);
    {
      auto f = open_out(dir / wsi / "spots.tsv", false);
      for (std::size_t i = 0; i < range.count; ++i) {
        const auto& s = ds.spots[range.begin + i];
        f << s.spot_id << "\t" << s.x << "\t" << s.y << "\n";
      }
    }
    {
      MatrixF32 m;
      m.rows = range.count;
      m.cols = ds.genes.size();
      m.values.reserve(m.rows * m.cols);
      for (std::size_t i = 0; i < range.count; ++i)
        for (std::size_t j = 0; j < m.cols; ++j)
          m.values.push_back(static_cast<float>(ds.expr.cell(range.begin + i, j)));
      write_matrix_f32(dir / wsi / "expression.f32", m);
    }
    if (ds.manifest.payload_kind == PayloadKind::feature) {
      MatrixF32 m;
      m.rows = range.count;
      m.cols = ds.manifest.feature_dim;
      m.values.reserve(m.rows * m.cols);
      for (std::size_t i = 0; i < range.count; ++i) {
        const auto& feat = ds.spots[range.begin + i].feature;
        if (feat.size() != m.cols) fail(errc::shape, "feature size mismatch while saving");
        m.values.insert(m.values.end(), feat.begin(), feat.end());
      }
      write_matrix_f32(dir / wsi / "features.f32", m);
    } else {
      PatchStack p;
      p.count = range.count;
      p.h = ds.manifest.patch_h;
      p.w = ds.manifest.patch_w;
      p.bytes.reserve(p.count * p.h * p.w * 3);
      for (std::size_t i = 0; i < range.count; ++i) {
        const auto& patch = ds.spots[range.begin + i].patch;
        if (patch.size() != p.h * p.w * 3) fail(errc::shape, "patch size mismatch while saving");
        p.bytes.insert(p.bytes.end(), patch.begin(), patch.end());
      }
      write_patches_u8(dir / wsi / "patches.u8", p);
    }
  }
}

}  // namespace gq::data
