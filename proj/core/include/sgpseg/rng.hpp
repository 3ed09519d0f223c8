// Copyright (c) 2026 the sgpseg authors
// SPDX-License-Identifier: Apache-2.0
//
// Seeded RNG with derivable substreams. All draws go through hand-rolled
// conversions (never std::*_distribution, whose outputs are
// implementation-defined), so byte-identical outputs are reproducible
// across compilers and platforms.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "sgpseg/check.hpp"

namespace sgpseg {

// splitmix64 finalizer; used for seed derivation only.
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t base, uint64_t tag) {
  return mix64(base ^ mix64(tag));
}

inline uint64_t derive_seed(uint64_t base, uint64_t tag1, uint64_t tag2) {
  return derive_seed(derive_seed(base, tag1), tag2);
}

class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), eng_(seed) {}

  // Independent stream keyed off this stream's seed; does not consume state.
  Rng substream(uint64_t tag) const { return Rng(derive_seed(seed_, tag)); }

  uint64_t seed() const { return seed_; }

  uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // Uniform strictly inside (0, 1); safe as a logistic-noise source.
  double uniform_open() {
    return (static_cast<double>(eng_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform_in(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive integer range, rejection-sampled to avoid modulo bias.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    SGPSEG_CHECK(lo <= hi, "uniform_int: empty range [" << lo << ", " << hi << "]");
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    uint64_t v;
    do {
      v = eng_();
    } while (v >= limit);
    return lo + static_cast<int64_t>(v % span);
  }

  // Box-Muller; one value per call so the stream position does not depend
  // on call parity.
  double normal() {
    double u1 = uniform_open();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

 private:
  uint64_t seed_;
  std::mt19937_64 eng_;
};

}  // namespace sgpseg
