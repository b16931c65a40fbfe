#include "genequery/trainer/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace gq::trainer {

namespace {

void put_u16(std::ostream& os, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f32(std::ostream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(os, bits);
}

std::uint16_t get_u16(std::istream& is) {
  unsigned char b[2];
  if (!is.read(reinterpret_cast<char*>(b), 2)) fail(errc::data, "checkpoint: truncated section");
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t get_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) fail(errc::data, std::string("checkpoint: truncated ") + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(errc::data, "cannot write checkpoint: " + path.string());
  f.write("GQCK", 4);
  put_u32(f, ckpt.version);

  std::ostringstream header;
  for (const auto& [k, v] : ckpt.header) header << k << "=" << v << "\n";
  std::string h = header.str();
  put_u32(f, static_cast<std::uint32_t>(h.size()));
  f.write(h.data(), static_cast<std::streamsize>(h.size()));

  std::uint32_t sections = 0;
  for (const auto& [name, entry] : ckpt.params) {
    put_u16(f, static_cast<std::uint16_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    const auto& shape = entry.value.shape();
    f.put(static_cast<char>(shape.size()));
    for (std::size_t d : shape) put_u32(f, static_cast<std::uint32_t>(d));
    for (float v : entry.value) put_f32(f, v);
    ++sections;
  }
  put_u32(f, sections);
  if (!f) fail(errc::data, "checkpoint write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(errc::data, "missing checkpoint: " + path.string());
  char magic[4];
  if (!f.read(magic, 4) || std::memcmp(magic, "GQCK", 4) != 0)
    fail(errc::data, "checkpoint: bad magic in " + path.string());
  Checkpoint ckpt;
  ckpt.version = get_u32(f, "version");
  if (ckpt.version != 1)
    fail(errc::data, "checkpoint: version mismatch (got " + std::to_string(ckpt.version) +
                         ", expected 1)");
  std::uint32_t hlen = get_u32(f, "header length");
  std::string header(hlen, '\0');
  if (!f.read(header.data(), hlen)) fail(errc::data, "checkpoint: truncated header");
  std::istringstream hs(header);
  std::string line;
  while (std::getline(hs, line)) {
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) fail(errc::data, "checkpoint: malformed header line: " + line);
    ckpt.header[line.substr(0, eq)] = line.substr(eq + 1);
  }

  std::uint32_t sections = 0;
  while (true) {
    // Either a section (u16 name length) or the trailing count remains; peek
    // by reading the next two bytes and checking for EOF afterwards.
    std::uint32_t maybe_count = get_u32(f, "section");
    if (f.peek() == EOF) {
      if (maybe_count != sections)
        fail(errc::data, "checkpoint: section count mismatch (file says " +
                             std::to_string(maybe_count) + ", read " + std::to_string(sections) + ")");
      break;
    }
    // Not the trailer: the four bytes were u16 name length + first two name
    // bytes. Rewind and parse properly.
    f.seekg(-4, std::ios::cur);
    std::uint16_t nlen = get_u16(f);
    std::string name(nlen, '\0');
    if (!f.read(name.data(), nlen)) fail(errc::data, "checkpoint: truncated section");
    int rank = f.get();
    if (rank == EOF) fail(errc::data, "checkpoint: truncated section");
    std::vector<std::size_t> shape;
    std::size_t total = 1;
    for (int d = 0; d < rank; ++d) {
      shape.push_back(get_u32(f, "section dims"));
      total *= shape.back();
    }
    num::Tensor<float> t(shape);
    for (std::size_t i = 0; i < total; ++i) {
      std::uint32_t bits = get_u32(f, "section data");
      float v;
      std::memcpy(&v, &bits, 4);
      t[i] = v;
    }
    ckpt.params.add(name, std::move(t));
    ++sections;
  }
  return ckpt;
}

}  // namespace gq::trainer
