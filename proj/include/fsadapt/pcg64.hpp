#pragma once

#include <bit>
#include <cstdint>
#include <limits>

namespace fsadapt {

/// PCG64 (XSL-RR 128/64) with selectable stream, using the reference
/// multiplier and the reference `srandom(initstate, initseq)` seeding.
/// Advance-then-output, matching the common PCG64 implementations.
class Pcg64 {
 public:
  using result_type = std::uint64_t;
  using uint128 = unsigned __int128;

  Pcg64(std::uint64_t initstate, uint128 initseq) { seed(initstate, initseq); }

  void seed(std::uint64_t initstate, uint128 initseq) {
    state_ = 0;
    inc_ = (initseq << 1u) | 1u;
    step();
    state_ += initstate;
    step();
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    step();
    const auto hi = static_cast<std::uint64_t>(state_ >> 64u);
    const auto lo = static_cast<std::uint64_t>(state_);
    const auto rot = static_cast<int>(state_ >> 122u);
    return std::rotr(hi ^ lo, rot);
  }

  /// Unbiased integer in [0, bound) by threshold rejection.
  std::uint64_t bounded(std::uint64_t bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const std::uint64_t r = (*this)();
      if (r >= threshold) return r % bound;
    }
  }

 private:
  static constexpr uint128 kMultiplier =
      (static_cast<uint128>(2549297995355413924ULL) << 64u) | 4865540595714422341ULL;

  void step() { state_ = state_ * kMultiplier + inc_; }

  uint128 state_ = 0;
  uint128 inc_ = 0;
};

}  // namespace fsadapt
