#pragma once

#include <cstdint>
#include <optional>
#include <span>

#include "ermica/matrix.hpp"

namespace ermica {

/// SplitMix64 finaliser; also used to derive independent seeds.
std::uint64_t mix64(std::uint64_t x);
std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value);

/// Counter-based 64-bit generator (SplitMix64 over a Weyl counter).
///
/// The draw sequence depends only on the seed, so results match across
/// platforms and standard libraries. Streams are move-only handles: pass
/// them by reference to the single owner that draws from them.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : seed_(seed), counter_(seed) {}
  RngStream(const RngStream&) = delete;
  RngStream& operator=(const RngStream&) = delete;
  RngStream(RngStream&&) = default;
  RngStream& operator=(RngStream&&) = default;

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();
  /// Uniform on (0, 1].
  double uniform_open();
  /// Uniform on [0, 1).
  double uniform();
  /// Uniform integer on [0, bound), unbiased.
  std::uint64_t uniform_index(std::uint64_t bound);
  /// Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal();
  bool bernoulli(double p);

  /// Independent child stream keyed by a tag.
  RngStream split(std::uint64_t tag) const { return RngStream(hash_combine(seed_, tag)); }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
  std::optional<double> spare_;
};

/// rows x cols matrix of i.i.d. N(mean, std^2) draws, filled row-major.
Matrix rng_normal(RngStream& rng, std::size_t rows, std::size_t cols, double mean, double std);

/// In-place Fisher-Yates shuffle.
void shuffle(RngStream& rng, std::span<std::size_t> items);

}  // namespace ermica
