#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace study {

std::uint64_t fnv1a64(std::string_view text);

// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Seed for an independent stream identified by (key, seed).
std::uint64_t stream_seed(std::string_view key, std::uint64_t seed);

/// std::mt19937_64 with portable bounded draws. The standard distributions
/// are implementation-defined, so everything that must reproduce across
/// platforms goes through these members instead.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::string_view key, std::uint64_t seed) : engine_(stream_seed(key, seed)) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, n); n must be positive.
  std::uint64_t below(std::uint64_t n);

  // Uniform in [0, 1) with 53 random bits.
  double uniform();

  bool bernoulli(double p) { return uniform() < p; }

private:
  std::mt19937_64 engine_;
};

}  // namespace study
