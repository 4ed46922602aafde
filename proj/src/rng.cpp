#include "pan/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pan/errors.hpp"

namespace pan {

double Rng::uniform01() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform01();
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw ParameterError("Rng::below: n must be positive");
  // Rejection keeps the draw unbiased.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

double Rng::normal(double mean, double stddev) {
  if (has_spare_) {
    has_spare_ = false;
    return mean + stddev * spare_;
  }
  double u1;
  do {
    u1 = uniform01();
  } while (u1 <= 0.0);
  const double u2 = uniform01();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return mean + stddev * r * std::cos(theta);
}

bool Rng::bernoulli(double p) {
  return uniform01() < p;
}

std::uint64_t Rng::poisson(double mean) {
  if (!(mean >= 0.0) || !std::isfinite(mean)) throw ParameterError("Rng::poisson: mean must be finite and >= 0");
  std::uint64_t total = 0;
  while (mean > 0.0) {
    const double chunk = std::min(mean, 64.0);
    mean -= chunk;
    const double limit = std::exp(-chunk);
    double prod = uniform01();
    while (prod > limit) {
      ++total;
      prod *= uniform01();
    }
  }
  return total;
}

Rng Rng::fork(std::uint64_t stream) {
  // splitmix64 finalizer over (next output, stream) decorrelates children.
  std::uint64_t z = engine_() ^ (stream * 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return Rng(z ^ (z >> 31));
}

}  // namespace pan
