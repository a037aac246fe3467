#pragma once

#include <cstdint>
#include <random>

namespace mfql {

/// Seeded pseudo-random source. Every stochastic routine takes one of these
/// explicitly so that runs are reproducible from a single integer seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double normal() { return normal_(engine_); }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }

  /// Derive an independent stream; advances this generator by one draw.
  Rng split() {
    std::seed_seq seq{engine_(), engine_()};
    std::uint64_t seeds[1];
    seq.generate(reinterpret_cast<std::uint32_t*>(seeds), reinterpret_cast<std::uint32_t*>(seeds) + 2);
    return Rng(seeds[0]);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace mfql
