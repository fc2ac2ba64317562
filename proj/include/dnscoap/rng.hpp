#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string_view>

namespace dnscoap {

/// Deterministic random source. The generator is std::mt19937_64 (whose
/// output sequence the standard pins down) and all distribution code lives
/// here, so a seed reproduces the same draws on every platform and stdlib.
/// Seeds fully determine simulator runs; never mix in wall-clock entropy.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next() { return gen_(); }

  /// Uniform draw from [0, bound). bound must be nonzero.
  std::uint64_t uniform(std::uint64_t bound) {
    // Rejection keeps the draw unbiased for bounds that do not divide 2^64.
    std::uint64_t limit =
        std::numeric_limits<std::uint64_t>::max() -
        std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t v;
    do {
      v = next();
    } while (v >= limit);
    return v % bound;
  }

  /// Uniform integer draw from [lo, hi], both inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(
                    uniform(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  /// Uniform draw from [0, 1) with 53 bits of precision.
  double uniform_real() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform draw from [lo, hi).
  double uniform_real(double lo, double hi) {
    return lo + (hi - lo) * uniform_real();
  }

  bool bernoulli(double p) { return uniform_real() < p; }

  /// Exponential inter-arrival draw with the given rate (events per second).
  double exponential(double rate) { return -std::log1p(-uniform_real()) / rate; }

  /// Child stream keyed by a label; independent of draws already made on
  /// this stream, so adding a consumer never perturbs the others.
  Rng derive(std::string_view label) const {
    std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
    for (char c : label) {
      h ^= static_cast<std::uint8_t>(c);
      h *= 0x100000001b3ull;
    }
    return Rng(splitmix(seed_ ^ h));
  }

  Rng derive(std::uint64_t salt) const { return Rng(splitmix(seed_ ^ salt)); }

private:
  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  std::uint64_t seed_;
  std::mt19937_64 gen_;
};

}  // namespace dnscoap
