#include "pan/safety.hpp"

#include <cmath>

#include "pan/errors.hpp"

namespace pan {

namespace {

void check_speed(const SafetyInput& in) {
  if (!(in.v0 >= 0.0) || !std::isfinite(in.v0)) throw ParameterError("safety: v0 must be finite and >= 0");
}

}  // namespace

double braking_distance(const SafetyInput& in) {
  check_speed(in);
  if (!(in.mu > 0.0)) throw ParameterError("safety: friction coefficient must be > 0");
  if (!(in.g > 0.0)) throw ParameterError("safety: g must be > 0");
  return in.v0 * in.v0 / (2.0 * in.mu * in.g);
}

double reaction_distance(const SafetyInput& in) {
  check_speed(in);
  if (!(in.t_r >= 0.0)) throw ParameterError("safety: reaction time must be >= 0");
  return in.v0 * in.t_r;
}

double total_stopping_distance(const SafetyInput& in) { return braking_distance(in) + reaction_distance(in); }

}  // namespace pan
