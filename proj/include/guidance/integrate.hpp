#pragma once

#include "guidance/types.hpp"

#include <cstdint>

namespace guidance::integrate {

enum class Direction : std::uint8_t { forward, backward };

struct FlowOptions {
  double rtol = 1e-10;
  double atol = 1e-12;
  /// Number of sample intervals of the returned trajectory; 0 keeps the
  /// endpoint only.
  int samples = 0;
  double initial_step = 1e-3;  ///< first trial step, normalized time
  double min_step = 1e-14;     ///< underflow guard, normalized time
  /// Abort threshold; healthy flows here take 1e2..1e4 steps, so hitting
  /// this means the span or the point is hopeless and the caller should
  /// treat it as a failed residual.
  long max_steps = 200'000;
};

enum class FailureReason : std::uint8_t { none, step_underflow, nonfinite, invalid_state, max_steps };

struct FlowResult {
  bool ok = false;
  FailureReason reason = FailureReason::none;
  double t_fail = 0.0;  ///< physical time at breakdown
  Vec10 z_end = Vec10::Zero();
  Trajectory trajectory;  ///< filled when samples > 0, times ascending

  explicit operator bool() const { return ok; }
};

const char* failure_reason_name(FailureReason r);

/// Integrates the coupled extremal system z = (xi, p) over a span of t_f
/// physical seconds with the control closed pointwise. Internally time is
/// normalized to s in [0,1] and t_f scales the right-hand side, so the free
/// final time enters as an ordinary parameter.
///
/// forward:  z0 is z at span time 0, z_end is z at t_f.
/// backward: z0 is z at span time t_f, z_end is z at 0.
///
/// Dormand-Prince 5(4) embedded pair with PI-free step control; sample
/// points are hit exactly by step clamping.
FlowResult flow(const Vec10& z0, double t_f, const CostWeights& w, const VehicleParams& P,
                Direction dir = Direction::forward, const FlowOptions& opt = {});

}  // namespace guidance::integrate
