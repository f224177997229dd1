#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace psteer {

// std::mt19937_64 is bit-stable across platforms but the standard
// distributions are not, so the value conversions live here.

inline double u64_to_unit(std::uint64_t x) {
  // 53 high bits -> [0, 1)
  return static_cast<double>(x >> 11) * 0x1.0p-53;
}

inline double u64_to_unit_open(std::uint64_t x) {
  // (0, 1], safe under log()
  return (static_cast<double>(x >> 11) + 1.0) * 0x1.0p-53;
}

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  double uniform() { return u64_to_unit(engine_()); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    const double u1 = u64_to_unit_open(engine_());
    const double u2 = u64_to_unit(engine_());
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  // Uniform index in [0, n). Modulo bias is irrelevant at these sizes.
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    // Fisher-Yates; std::shuffle is implementation-defined.
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[index(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// Counter-based gaussian: reproducible noise addressable by (seed, a, b, c),
// independent of evaluation order.
inline double gaussian_at(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                          std::uint64_t c) {
  std::uint64_t s = seed;
  (void)splitmix64(s);
  s ^= splitmix64(a = a + 0x632be59bd9b4e019ULL);
  (void)splitmix64(s);
  s ^= splitmix64(b = b + 0x9e6c63d0876a9a47ULL);
  (void)splitmix64(s);
  s ^= splitmix64(c = c + 0xd1b54a32d192ed03ULL);
  const double u1 = u64_to_unit_open(splitmix64(s));
  const double u2 = u64_to_unit(splitmix64(s));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
}

}  // namespace psteer
