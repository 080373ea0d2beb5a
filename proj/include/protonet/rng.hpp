#ifndef PROTONET_RNG_HPP
#define PROTONET_RNG_HPP

#include <array>
#include <cstdint>

namespace protonet {

/// splitmix64 step; advances `state` and returns the mixed output.
std::uint64_t splitmix64(std::uint64_t& state) noexcept;

/// Seed for an independent stream `stream` under `master`. Used to give each
/// evaluation episode its own generator so results never depend on thread
/// scheduling.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) noexcept;

/*
 * xoshiro256** seeded through splitmix64. All distribution helpers below are
 * implemented here rather than with <random> distributions, whose output is
 * implementation-defined and would break cross-platform reproducibility.
 */
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept;

  std::uint64_t next() noexcept;

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept;

  /// Uniform integer in [0, bound); bound must be nonzero.
  std::uint64_t below(std::uint64_t bound) noexcept;

  /// Standard normal via Box-Muller (one draw per call, no caching).
  double normal() noexcept;

  const std::array<std::uint64_t, 4>& state() const noexcept { return s_; }

  friend bool operator==(const Rng&, const Rng&) = default;

 private:
  std::array<std::uint64_t, 4> s_;
};

}  // namespace protonet

#endif  // PROTONET_RNG_HPP
