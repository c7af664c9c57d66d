// Counter-based random number generation.
//
// Every random value is a pure function of (seed, stream, counter), so any
// part of a run can be replayed without carrying generator state around.
// Resuming a training run from a checkpoint therefore only needs the
// iteration index, and parallel fills are order-independent.
#pragma once

#include <cmath>
#include <cstdint>

namespace dna {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace detail

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  // Independent substream; chains are cheap and collision-resistant.
  Rng stream(std::uint64_t id) const {
    return Rng(detail::splitmix64(seed_ ^ detail::splitmix64(id + 0x632be59bd9b4e019ull)));
  }

  std::uint64_t bits(std::uint64_t counter) const {
    return detail::splitmix64(seed_ ^ detail::splitmix64(counter));
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform(std::uint64_t counter) const {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }

  // Uniform in [lo, hi).
  double uniform(std::uint64_t counter, double lo, double hi) const {
    return lo + (hi - lo) * uniform(counter);
  }

  // Standard normal via Box-Muller; each counter yields one deviate.
  double normal(std::uint64_t counter) const {
    const double u1 = static_cast<double>((bits(2 * counter) >> 11) + 1) * 0x1.0p-53;
    const double u2 = static_cast<double>(bits(2 * counter + 1) >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t counter, std::uint64_t n) const {
    return bits(counter) % n;
  }

 private:
  std::uint64_t seed_;
};

}  // namespace dna
