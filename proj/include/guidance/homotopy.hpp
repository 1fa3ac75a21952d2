#pragma once

#include "guidance/types.hpp"

#include <functional>
#include <vector>

namespace guidance::homotopy {

/// Starting values of the phase-1 deformation: a short, level, slow problem
/// sitting on its own (tiny) cruise altitude.
struct Phase1Init {
  double h_c_i = 0.5;     ///< initial cruise altitude [m]
  double x_m_i = 5.0;     ///< initial downrange target [m]
  double gamma0_i = 0.0;  ///< initial launch angle [rad]
  double gamma_m_i = 0.0; ///< initial impact angle [rad]
  double v0_i = 1.0;      ///< initial speed [m/s]
};

/// Boundary data and cruise altitude of the phase-1 problem at a given
/// lambda. All quantities are driven by the single scalar simultaneously.
struct Phase1Point {
  State xi0;
  double x_target = 0.0;
  double h_target = 0.0;
  double gamma_target = 0.0;
  double h_c = 0.0;
};

/// The phase-1 interpolation rules. Everything is linear in lambda except the
/// downrange target, which follows a lambda^2 rule. x0 and m0 are held at
/// their physical values.
Phase1Point phase1_schedule(double lambda, const BoundaryConditions& bc, double h_c_target,
                            const Phase1Init& init = {});

struct Phase2Range {
  double k_max = 100.0;
  double k_min = 2.0;
  double u_max_init = 25.0;
  double u_max_target = 2.0;
};

struct Phase2Point {
  double k = 0.0;
  double u_max = 0.0;
};

/// Joint decreasing interpolation of the regularization weight and the
/// control saturation, driven by theta in [0,1].
Phase2Point phase2_schedule(double theta, const Phase2Range& range = {});

/// Linear extrapolation of the unknown vector from the last two accepted
/// solutions to the next parameter value.
VectorXd predict_linear(const VectorXd& z_prev, double param_prev, const VectorXd& z_curr,
                        double param_curr, double param_next);

struct ContinuationConfig {
  double delta_init = 1e-3;
  double delta_min = 1e-6;
  double delta_max = 0.05;
  bool linear_predictor = true;
};

struct Attempt {
  double param = 0.0;
  double delta = 0.0;
  bool accepted = false;
  int newton_iterations = 0;
  double residual_norm = 0.0;
};

struct ContinuationTrace {
  std::vector<Attempt> attempts;

  int total_newton_iterations() const;
  int accepted_steps() const;
  int rejected_steps() const;
};

struct StepOutcome {
  bool converged = false;
  VectorXd Z;
  int iterations = 0;
  double residual_norm = 0.0;
};

/// Solves the subproblem at a given parameter from a given guess.
using StepSolver = std::function<StepOutcome(double param, const VectorXd& guess)>;

struct ContinuationResult {
  bool ok = false;
  VectorXd Z;            ///< last accepted solution
  double reached = 0.0;  ///< last accepted parameter (1 on success)
  ContinuationTrace trace;
};

/// Simple continuation: march the parameter from 0 to 1, doubling the step
/// after success and halving after failure, with the step clamped to land
/// exactly on 1. Z0 must solve the problem at parameter 0.
ContinuationResult continue_path(const StepSolver& solver, const VectorXd& Z0,
                                 const ContinuationConfig& config = {});

}  // namespace guidance::homotopy
