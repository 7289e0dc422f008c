#pragma once

#include <algorithm>
#include <cstdint>
#include <random>

namespace iganet {

// Seeded random stream. All stochastic pieces of the library (weight init,
// epoch shuffling, flip augmentation, synthetic data) draw from an explicit
// Rng so that a fixed seed reproduces a run bit-for-bit on the same binary.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(gen_);
  }

  double normal(double mean, double stddev) {
    return std::normal_distribution<double>(mean, stddev)(gen_);
  }

  // inclusive bounds
  int uniform_int(int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(gen_);
  }

  bool bernoulli(double p) { return uniform(0.0, 1.0) < p; }

  std::uint64_t next_u64() { return gen_(); }

  template <class It>
  void shuffle(It first, It last) {
    std::shuffle(first, last, gen_);
  }

  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

}  // namespace iganet
