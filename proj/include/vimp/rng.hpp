#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <optional>

namespace vimp {

// SplitMix64 finalizer: a bijective avalanche mix on 64-bit words.
std::uint64_t splitmix64(std::uint64_t x);

// Folds a list of keys into one 64-bit seed. Order matters; equal key lists
// give equal seeds on every platform.
std::uint64_t mix_seed(std::initializer_list<std::uint64_t> keys);

// Deterministic random stream (xoshiro256**). Substreams are derived from
// the stream's seed and a key, never from its current state, so the order
// in which substreams are created or consumed does not matter.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }
  RngStream substream(std::uint64_t key) const;
  RngStream substream(std::initializer_list<std::uint64_t> keys) const;

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  // Uniform on {0, ..., bound - 1}; bound > 0.
  std::uint64_t below(std::uint64_t bound);
  // Standard normal (Marsaglia polar method).
  double normal();

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> state_{};
  std::optional<double> spare_normal_;
};

}  // namespace vimp
