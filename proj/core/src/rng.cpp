#include "brave/rng.hpp"

#include <cmath>
#include <numbers>

namespace brave {

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

uint64_t hash_u64(uint64_t seed, uint64_t v) { return splitmix64(seed ^ (v + 0x9e3779b97f4a7c15ULL)); }

uint64_t hash_str(uint64_t seed, std::string_view s) {
  uint64_t h = seed ^ 0xcbf29ce484222325ULL;
  for (unsigned char c : s) h = splitmix64(h ^ c);
  return h;
}

Rng::Rng(uint64_t seed) {
  uint64_t x = seed;
  for (auto& s : s_) {
    x = splitmix64(x);
    s = x;
  }
}

static inline uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

uint64_t Rng::next_u64() {
  const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
  const uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

int64_t Rng::uniform_int(int64_t n) {
  // Rejection sampling over the largest multiple of n below 2^64.
  uint64_t un = static_cast<uint64_t>(n);
  uint64_t limit = ~uint64_t{0} - (~uint64_t{0} % un);
  uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return static_cast<int64_t>(x % un);
}

bool Rng::bernoulli(double p) { return uniform() < p; }

double Rng::normal() {
  double u1 = uniform();
  double u2 = uniform();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::normal(double mean, double stddev) { return mean + stddev * normal(); }

Rng stream_rng(uint64_t master, std::string_view label, std::initializer_list<uint64_t> path) {
  uint64_t h = hash_str(master, label);
  for (uint64_t p : path) h = hash_u64(h, p);
  return Rng(h);
}

}  // namespace brave
