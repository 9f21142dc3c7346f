#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "dfusion/tensor.hpp"

namespace dfusion {

/// Seeded generator passed explicitly through every stochastic operation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  double normal();
  double uniform();  // [0, 1)
  /// Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  Tensor normal_tensor(std::vector<std::size_t> dims);
  std::uint64_t next_u64() { return engine_(); }

  /// Independent stream keyed by (seed, stream id); used to give batch items
  /// their own generators without depending on evaluation order.
  Rng derive(std::uint64_t stream) const;

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// SplitMix64 finalizer, used for seed derivation.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace dfusion
