#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <vector>

namespace deeptest {

// Counter-based PRNG (SplitMix64). Every random quantity in the library is
// drawn from an explicitly seeded stream, and child streams are derived with
// split_seed() from a parent seed plus a stable path, so results do not
// depend on scheduling or on how many other streams exist.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform on the open interval (0,1); exactly one next_u64() per call.
  double uniform01() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Box-Muller, cosine branch only: consumes exactly two words per call.
  double normal(double mean = 0.0, double sd = 1.0) {
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + sd * r * std::cos(2.0 * std::numbers::pi * u2);
  }

  double exponential(double rate = 1.0) { return -std::log(uniform01()) / rate; }

  // Uniform integer in [0, m).
  std::uint64_t uniform_index(std::uint64_t m) {
    const auto k = static_cast<std::uint64_t>(uniform01() * static_cast<double>(m));
    return k >= m ? m - 1 : k;
  }

  // Uniform integer in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(uniform_index(static_cast<std::uint64_t>(hi - lo + 1)));
  }

  template <typename T>
  void shuffle(std::vector<T>& xs) {
    for (std::size_t i = xs.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(xs[i - 1], xs[j]);
    }
  }

 private:
  std::uint64_t state_;
};

namespace detail {
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}
}  // namespace detail

// Derives a child seed from (seed, tag, i, j, k). The derivation is a fixed
// hash chain, part of the reproducibility contract: the same path always
// yields the same stream no matter where or when it is opened.
inline std::uint64_t split_seed(std::uint64_t seed, std::string_view tag, std::uint64_t i = 0,
                                std::uint64_t j = 0, std::uint64_t k = 0) {
  std::uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a over the tag
  for (const char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  h = detail::mix64(h ^ seed);
  h = detail::mix64(h ^ (i + 0x9E3779B97F4A7C15ULL));
  h = detail::mix64(h ^ (j + 0x7F4A7C159E3779B9ULL));
  h = detail::mix64(h ^ (k + 0x85EBCA6B2C2B2AE3ULL));
  return h;
}

}  // namespace deeptest
