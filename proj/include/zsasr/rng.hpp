#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace zsasr {

// Keyed deterministic streams. Every consumer derives its own generator from
// (seed, key, index), so no hidden state has to be checkpointed beyond the
// seed and the step counter.
std::uint64_t mix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t seed, std::string_view key, std::uint64_t index = 0);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}
  Rng(std::uint64_t seed, std::string_view key, std::uint64_t index = 0)
      : eng_(derive_seed(seed, key, index)) {}

  std::uint64_t next_u64() { return eng_(); }
  // Uniform in [0, 1).
  double uniform();
  // Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  double normal(double mean = 0.0, double stddev = 1.0);
  bool bernoulli(double p) { return uniform() < p; }

  template <class It>
  void shuffle(It first, It last) {
    const auto n = last - first;
    for (auto i = n - 1; i > 0; --i) {
      const auto j = uniform_int(0, i);
      std::swap(first[i], first[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace zsasr
