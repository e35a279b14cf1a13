#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace msrl {

// Deterministic xoshiro256** generator with hand-rolled distributions.
//
// Every random decision in the project flows through one of these. Streams
// are derived from (master seed, label), so subsystems draw from independent
// sequences and adding a new consumer never perturbs existing ones. The
// standard <random> distributions are implementation-defined and would break
// the bit-exact reproducibility contract, hence the explicit implementations
// here. State is exposed for checkpointing.
class SplitRng {
 public:
  using State = std::array<std::uint64_t, 4>;

  SplitRng() : SplitRng(0, "default") {}
  SplitRng(std::uint64_t seed, std::string_view stream_label);

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53 bits of precision.
  double next_unit();

  // Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t next_below(std::uint64_t bound);

  // Standard normal via single-value Box-Muller (stateless between calls).
  double next_gaussian();

  const State& state() const { return state_; }
  void set_state(const State& s) { state_ = s; }

 private:
  State state_{};
};

}  // namespace msrl
