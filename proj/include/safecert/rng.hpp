#pragma once

#include <cstdint>
#include <random>

namespace safecert {

// splitmix64 finalizer; used to derive independent streams from (seed, index)
// pairs so parallel sampling stays reproducible.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

constexpr std::uint64_t fnv1a(const char* s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (; *s; ++s) h = (h ^ static_cast<unsigned char>(*s)) * 0x100000001b3ULL;
  return h;
}

// mt19937_64 engine with explicit 53-bit uniform and inverse-CDF normal draws.
// std::uniform_real_distribution / std::normal_distribution are
// implementation-defined, so they are avoided for reproducibility.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  // uniform in the open interval (0, 1)
  double uniform() { return (static_cast<double>(eng_() >> 11) + 0.5) * 0x1p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  int uniform_int(int n) {
    const std::uint64_t bound = ~0ULL - ~0ULL % static_cast<std::uint64_t>(n);
    std::uint64_t v = eng_();
    while (v >= bound) v = eng_();
    return static_cast<int>(v % static_cast<std::uint64_t>(n));
  }

  // standard normal via the inverse CDF (defined in rng.cpp)
  double normal();

 private:
  std::mt19937_64 eng_;
};

}  // namespace safecert
