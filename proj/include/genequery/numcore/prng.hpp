#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace gq::num {

// All randomness in the project flows through this splitmix64 stream so that
// a 64-bit seed reproduces every artifact bit for bit, across platforms and
// implementations. Normal variates come from Box-Muller on two uniforms; one
// variate is drawn per pair so the stream position does not depend on call
// parity.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 bits of mantissa.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log1p(-u1));
    return r * std::cos(6.283185307179586476925286766559 * u2);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

 private:
  std::uint64_t state_;
};

inline constexpr std::uint64_t kFnvOffset = 14695981039346656037ULL;
inline constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

// FNV-1a 64-bit over the bytes of `s`. Pinned exactly so hashed featurizations
// reproduce across implementations.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = kFnvOffset;
  for (unsigned char c : s) {
    h ^= static_cast<std::uint64_t>(c);
    h *= kFnvPrime;
  }
  return h;
}

// Derives an independent sub-seed from (seed, tag). Two splitmix steps keep
// related seeds from producing correlated streams.
inline std::uint64_t mix(std::uint64_t seed, std::uint64_t tag) {
  Rng a(seed);
  Rng b(a.next_u64() ^ tag);
  return b.next_u64();
}

inline std::uint64_t mix(std::uint64_t seed, std::string_view tag) { return mix(seed, fnv1a64(tag)); }

// Deterministic Fisher-Yates shuffle driven by the named stream.
template <typename Vec>
void shuffle(Vec& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace gq::num
