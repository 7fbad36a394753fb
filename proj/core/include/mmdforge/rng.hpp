#ifndef MMDFORGE_RNG_HPP
#define MMDFORGE_RNG_HPP

#include <cstdint>
#include <vector>

namespace mmdforge {

// Deterministic random source. All distributions are implemented on top of
// the raw 64-bit stream so that identical seeds give identical draws on any
// platform, independent of the standard library's <random> distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53 random bits.
  double uniform01();
  double uniform(double lo, double hi);

  // Standard normal via Box-Muller, second value cached.
  double normal();

  // Uniform integer in [0, n), rejection-sampled.
  std::uint64_t uniform_index(std::uint64_t n);

  // Fisher-Yates.
  void shuffle(std::vector<int>& values);

  // Child stream independent of this generator's consumption state.
  // Children derived with distinct tags never share state with the parent.
  Rng derive(std::uint64_t tag) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// SplitMix64 finalizer; used for seed expansion and stream derivation.
std::uint64_t mix64(std::uint64_t value);
std::uint64_t mix64(std::uint64_t seed, std::uint64_t tag);

}  // namespace mmdforge

#endif  // MMDFORGE_RNG_HPP
