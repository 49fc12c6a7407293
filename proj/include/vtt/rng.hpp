#pragma once

#include <cstdint>

namespace vtt {

/// Counter-based generator: output n is splitmix64(seed + n * golden_gamma).
///
/// The integer stream depends only on (seed, counter), so it is identical on
/// every platform. Gaussian draws use Box-Muller on top of uniform doubles and
/// therefore also depend on the host libm's log/cos/sin.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  /// Normal resampled until it falls inside mean +- 2 stddev.
  double truncated_normal(double stddev);

  /// Independent child stream; the derivation is a pure function of
  /// (seed, stream_id) and does not advance this generator.
  SeededRng split(std::uint64_t stream_id) const;

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace vtt
