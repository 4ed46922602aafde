#pragma once

namespace pan {

struct SafetyInput {
  double v0 = 0.0;   // m/s
  double mu = 0.7;   // tyre-road friction coefficient
  double g = 9.81;   // m/s^2
  double t_r = 1.0;  // reaction time, s
};

constexpr double kmh_to_ms(double kmh) { return kmh / 3.6; }

// Distance to stop from v0 under constant deceleration mu * g:
// v_f^2 = v_0^2 - 2 mu g d  with v_f = 0.
double braking_distance(const SafetyInput& in);
// Distance covered at v0 before braking starts.
double reaction_distance(const SafetyInput& in);
double total_stopping_distance(const SafetyInput& in);

}  // namespace pan
