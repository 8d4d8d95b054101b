#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>
#include <vector>

namespace brave {

// splitmix64: stateless 64-bit mixer used for seed derivation and hashing.
uint64_t splitmix64(uint64_t x);

// Order-sensitive combiner for building per-purpose seeds out of a master
// seed plus a path of integers/labels, e.g. (master, "sample", class, index).
uint64_t hash_u64(uint64_t seed, uint64_t v);
uint64_t hash_str(uint64_t seed, std::string_view s);

// xoshiro256++ with all derived distributions implemented here, so streams
// are bitwise stable across platforms and standard library versions.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64();

  // Uniform double in [0, 1), 53-bit resolution.
  double uniform();
  double uniform(double lo, double hi);
  // Uniform integer in [0, n), n > 0.
  int64_t uniform_int(int64_t n);
  bool bernoulli(double p);
  // Standard normal via Box-Muller; consumes exactly two uniforms per call.
  double normal();
  double normal(double mean, double stddev);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i) {
      int64_t j = uniform_int(i + 1);
      std::swap(v[i], v[j]);
    }
  }

 private:
  uint64_t s_[4];
};

// Convenience: an Rng seeded from a master seed plus a label path.
Rng stream_rng(uint64_t master, std::string_view label, std::initializer_list<uint64_t> path = {});

}  // namespace brave
