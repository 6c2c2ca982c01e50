#pragma once

#include <array>
#include <cstdint>

namespace omtube {

/// Philox4x32-10 counter-based block cipher (Salmon et al., SC'11).
/// Stateless: the same (counter, key) always yields the same block.
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter generate(Counter ctr, Key key) noexcept;
};

/// Logical RNG streams. Legs of a ratio estimate and the resampling
/// draws use distinct streams so they never share noise.
enum class Stream : std::uint32_t {
  primary = 0,
  reference = 1,
  resampling = 2,
  bridge = 3,
  test = 7,
};

/// Random variates for one (seed, stream, path, step) cell.
///
/// Variates within a cell are produced by incrementing the block counter,
/// so a path's noise depends only on its own indices and never on the
/// order in which workers visit paths.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, Stream stream, std::uint64_t path, std::uint64_t step) noexcept;

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;
  /// Standard normal (Marsaglia polar method, pairs cached).
  double normal() noexcept;

 private:
  void refill() noexcept;

  Philox4x32::Key key_{};
  Philox4x32::Counter ctr_{};
  Philox4x32::Counter block_{};
  int used_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace omtube
