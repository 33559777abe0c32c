#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace fm {

// Counter-free xoshiro256++ stream. Hand-rolled so that traces are
// bit-reproducible across platforms and standard-library versions.
class Rng {
 public:
  Rng() : Rng(0) {}
  explicit Rng(uint64_t seed);

  uint64_t next_u64();

  // Uniform on [0, 1) with 53 random bits.
  double uniform01();
  // Uniform on [lo, hi).
  double uniform(double lo, double hi);
  // Uniform integer in [0, n).
  uint64_t uniform_int(uint64_t n);
  // Standard normal via Box-Muller; the spare draw is cached in the
  // stream state so clones replay identically.
  double normal();
  double normal(double mean, double stddev);
  bool bernoulli(double p);
  // Index sampled from an (unnormalized is fine) weight vector.
  std::size_t categorical(const std::vector<double>& weights);
  // In-place Fisher-Yates shuffle of index vector.
  void shuffle(std::vector<std::size_t>& idx);

 private:
  uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// FNV-1a, used for label hashing and content hashes.
uint64_t fnv1a(std::string_view s);
uint64_t hash_combine(uint64_t h, uint64_t v);
uint64_t hash_double(uint64_t h, double v);

// Derives an independent child stream from a root seed. Streams are a
// pure function of (root, label, a, b): adding or removing
// instrumentation never perturbs other streams.
Rng make_stream(uint64_t root, std::string_view label, uint64_t a = 0,
                uint64_t b = 0);

}  // namespace fm
