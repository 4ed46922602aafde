#pragma once

#include <cstdint>
#include <random>

namespace pan {

/// Seeded random stream, identical on every platform.
///
/// The bit source is std::mt19937_64, whose output sequence is fixed by the
/// C++ standard. The standard distributions are not, so every derived draw
/// (uniform double, normal, Bernoulli, Poisson) is computed here from raw
/// 64-bit outputs:
///   - uniform01: top 53 bits scaled by 2^-53, in [0, 1)
///   - normal: Box-Muller, both outputs consumed in order
///   - poisson: Knuth multiplication, split into chunks of mean <= 64
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed), seed_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() { return engine_(); }
  double uniform01();
  double uniform(double lo, double hi);
  // Integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);
  double normal(double mean = 0.0, double stddev = 1.0);
  bool bernoulli(double p);
  std::uint64_t poisson(double mean);

  // Independent child stream; used to give each frame its own generator.
  Rng fork(std::uint64_t stream);

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace pan
