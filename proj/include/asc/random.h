#pragma once

#include <cstdint>
#include <string_view>

namespace asc {

/// splitmix64 finalizer; good avalanche, used for seed derivation.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Per-component seed: a component name hashed into the run seed, so adding a
/// component never shifts the streams of the others.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view component) {
  return mix64(seed ^ fnv1a(component));
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view component,
                                    std::uint64_t index) {
  return mix64(derive_seed(seed, component) + mix64(index));
}

/// Small deterministic generator. Unlike the <random> distributions, its
/// outputs are identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next() % n; }

  double normal();

  // Exponential with the given rate.
  double exponential(double rate);

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Fisher-Yates shuffle driven by Rng.
template <typename It>
void shuffle(It first, It last, Rng& rng) {
  auto n = last - first;
  for (auto i = n - 1; i > 0; --i) {
    auto j = static_cast<decltype(i)>(rng.below(static_cast<std::uint64_t>(i + 1)));
    std::swap(first[i], first[j]);
  }
}

}  // namespace asc
