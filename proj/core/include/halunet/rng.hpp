#pragma once

// Deterministic PRNG: xoshiro256** seeded by expanding a 64-bit seed through
// splitmix64. The integer stream is fully specified and identical on every
// platform:
//
//   splitmix64(x): x += 0x9E3779B97F4A7C15; z = x;
//                  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9;
//                  z = (z ^ (z >> 27)) * 0x94D049BB133111EB;
//                  return z ^ (z >> 31);
//   state s[0..3] = four successive splitmix64 outputs from the seed.
//   next(): r = rotl(s1 * 5, 7) * 9; t = s1 << 17;
//           s2 ^= s0; s3 ^= s1; s1 ^= s2; s0 ^= s3; s2 ^= t; s3 = rotl(s3, 45)
//
// uniform() takes the top 53 bits: (next() >> 11) * 2^-53, in [0, 1).
// normal() is Box-Muller on two uniforms (cosine branch only, no caching).

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

namespace halunet {

std::uint64_t splitmix64(std::uint64_t& state);

/// Independent seed for a named sub-stream (e.g. per-epoch shuffles).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  double exponential(double mean);
  /// Uniform integer in [0, n); rejection sampling, n > 0.
  std::uint64_t below(std::uint64_t n);

  template <class T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t s_[4];
};

}  // namespace halunet
