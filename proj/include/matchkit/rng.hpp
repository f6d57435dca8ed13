#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace matchkit {

// Stateless mixer used to derive per-record / per-epoch seeds from a base seed.
std::uint64_t splitmix64(std::uint64_t x);

// Seedable generator with fully specified distributions so that datasets are
// reproducible across platforms. Generator id: "mt19937_64+boxmuller/v1".
// std::*_distribution is implementation-defined and therefore not used here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  static const char* generator_id() { return "mt19937_64+boxmuller/v1"; }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform();

  // Uniform integer in [0, bound), rejection sampled (no modulo bias).
  std::uint64_t uniform_below(std::uint64_t bound);

  // Standard normal via Box-Muller (second variate cached).
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Uniform random permutation of {0, ..., k-1} (Fisher-Yates).
  std::vector<int> permutation(int k);

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace matchkit
