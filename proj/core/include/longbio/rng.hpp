#pragma once

/**
 * Deterministic seeded randomness.
 *
 * Every random draw in the generator goes through this class instead of
 * <random> distributions, whose output is implementation-defined. A single
 * root seed fans out into independent substreams keyed by integer tags, so
 * instances can be generated in any order (or in parallel, one substream per
 * instance) and still come out byte-identical.
 */

#include <cstdint>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace longbio {

class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  // splitmix64 step
  uint64_t next() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Unbiased draw in [0, n) via rejection sampling.
  uint64_t bounded(uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::bounded: n must be > 0");
    const uint64_t threshold = (0 - n) % n;
    for (;;) {
      const uint64_t r = next();
      if (r >= threshold) return r % n;
    }
  }

  // 53-bit uniform in [0, 1)
  double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  bool chance(double p) {
    if (p <= 0.0) return false;
    if (p >= 1.0) return true;
    return unit() < p;
  }

  template <typename T>
  const T& pick(const std::vector<T>& v) {
    if (v.empty()) throw std::invalid_argument("Rng::pick: empty vector");
    return v[bounded(v.size())];
  }

  // Derives an independent stream; same (state, tag) -> same stream.
  Rng substream(uint64_t tag) const { return Rng(mix(state_, tag)); }

  Rng substream(std::string_view tag) const {
    // FNV-1a over the tag, then mixed with the parent state
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : tag) {
      h ^= c;
      h *= 0x100000001b3ull;
    }
    return Rng(mix(state_, h));
  }

  static uint64_t mix(uint64_t a, uint64_t b) {
    uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2));
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

 private:
  uint64_t state_;
};

}  // namespace longbio
