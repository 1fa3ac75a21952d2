#include "guidance/homotopy.hpp"

#include <algorithm>
#include <cmath>

namespace guidance::homotopy {

Phase1Point phase1_schedule(double lambda, const BoundaryConditions& bc, double h_c_target,
                            const Phase1Init& init) {
  const double l = lambda;
  Phase1Point pt;
  pt.h_c = init.h_c_i + l * (h_c_target - init.h_c_i);
  pt.xi0.x = bc.xi0.x;
  pt.xi0.h = pt.h_c + l * (bc.xi0.h - pt.h_c);
  pt.xi0.v = init.v0_i + l * (bc.xi0.v - init.v0_i);
  pt.xi0.gamma = init.gamma0_i + l * (bc.xi0.gamma - init.gamma0_i);
  pt.xi0.m = bc.xi0.m;
  pt.x_target = init.x_m_i + l * l * (bc.target.x - init.x_m_i);
  pt.h_target = pt.h_c + l * (bc.target.h - pt.h_c);
  pt.gamma_target = init.gamma_m_i + l * (bc.target.gamma - init.gamma_m_i);
  return pt;
}

Phase2Point phase2_schedule(double theta, const Phase2Range& range) {
  return {range.k_max + theta * (range.k_min - range.k_max),
          range.u_max_init + theta * (range.u_max_target - range.u_max_init)};
}

VectorXd predict_linear(const VectorXd& z_prev, double param_prev, const VectorXd& z_curr,
                        double param_curr, double param_next) {
  const double delta = param_next - param_curr;
  return z_curr + delta / (param_curr - param_prev) * (z_curr - z_prev);
}

int ContinuationTrace::total_newton_iterations() const {
  int n = 0;
  for (const auto& a : attempts) n += a.newton_iterations;
  return n;
}

int ContinuationTrace::accepted_steps() const {
  int n = 0;
  for (const auto& a : attempts) n += a.accepted ? 1 : 0;
  return n;
}

int ContinuationTrace::rejected_steps() const {
  return static_cast<int>(attempts.size()) - accepted_steps();
}

ContinuationResult continue_path(const StepSolver& solver, const VectorXd& Z0,
                                 const ContinuationConfig& config) {
  ContinuationResult out;
  out.Z = Z0;
  out.reached = 0.0;

  double param = 0.0;
  double delta = std::clamp(config.delta_init, config.delta_min, config.delta_max);

  bool have_prev = false;
  VectorXd z_prev;
  double param_prev = 0.0;

  while (param < 1.0) {
    if (delta < config.delta_min) {
      return out;  // stalled; out carries the last good point
    }
    const double step = std::min(delta, 1.0 - param);
    // Land exactly on 1 when the step is clamped by the remaining span.
    const double target = step >= 1.0 - param ? 1.0 : param + step;

    VectorXd guess = out.Z;
    if (config.linear_predictor && have_prev) {
      guess = predict_linear(z_prev, param_prev, out.Z, param, target);
    }

    const StepOutcome sol = solver(target, guess);
    out.trace.attempts.push_back(
        {target, step, sol.converged, sol.iterations, sol.residual_norm});

    if (sol.converged) {
      z_prev = out.Z;
      param_prev = param;
      have_prev = true;
      out.Z = sol.Z;
      param = target;
      out.reached = param;
      delta = std::min(2.0 * delta, config.delta_max);
    } else {
      delta = 0.5 * step;
    }
  }

  out.ok = true;
  return out;
}

}  // namespace guidance::homotopy
