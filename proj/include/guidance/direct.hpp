#pragma once

#include "guidance/types.hpp"

#include <cstdint>

namespace guidance::direct {

/// Crank-Nicolson transcription of the optimal control problem on a uniform
/// grid. Decision vector layout:
///   Z = [xi_1 .. xi_N | u_1 .. u_N | t_f]   (dimension 6N + 1)
/// xi_0 is fixed to the initial state; u_i is the control on interval i.
/// Constraints: 5N defects
///   xi_i - xi_{i-1} - h/2 (f(xi_{i-1},u_i) + f(xi_i,u_i)),  h = t_f/N
/// followed by the three fixed terminal rows (x, h, gamma). v and m are free
/// at the final node. The objective is the trapezoidal quadrature of the
/// running cost, consistent with the defect scheme.
struct Transcription {
  int N = 200;
  State xi0;
  double x_f = 0.0, h_f = 0.0, gamma_f = 0.0;
  CostWeights w;  ///< w.k = 0 gives the non-regularized cost; w.lambda selects the dynamics
  VehicleParams P;
  /// transcribe() derives these from the boundary data; a silly floor lets
  /// the time variable collapse into an infeasible corner.
  double t_f_min = 1.0, t_f_max = 2000.0;

  int dim() const { return 6 * N + 1; }
  int n_constraints() const { return 5 * N + 3; }

  int state_index(int i) const { return 5 * (i - 1); }  // i in 1..N
  int control_index(int i) const { return 5 * N + (i - 1); }
  int tf_index() const { return 6 * N; }

  State node(const VectorXd& Z, int i) const;  ///< i in 0..N (0 returns xi0)
  double control(const VectorXd& Z, int i) const;  ///< i in 1..N

  double objective(const VectorXd& Z) const;
  void constraints(const VectorXd& Z, VectorXd& c) const;
  /// g += d(y . c)/dZ for a fixed multiplier-like vector y (length 5N+3).
  void add_constraint_gradient(const VectorXd& Z, const VectorXd& y, VectorXd& g) const;
  void objective_gradient(const VectorXd& Z, VectorXd& g) const;

  /// Straight-line interpolation of the boundary data: linear x, h, gamma;
  /// constant speed; linear mass depletion; zero control.
  VectorXd warm_start(double t_f_guess) const;
  void bounds(VectorXd& lo, VectorXd& hi) const;
  /// Characteristic magnitudes used to scale variables and constraint rows.
  VectorXd variable_scales() const;
  VectorXd constraint_scales() const;

  Trajectory to_trajectory(const VectorXd& Z) const;
};

Transcription transcribe(const BoundaryConditions& bc, const CostWeights& w,
                         const VehicleParams& P, int N);

struct NlpOptions {
  int outer_max = 40;
  int inner_max = 2000;  ///< L-BFGS iterations per outer solve
  int lbfgs_memory = 30;
  double mu0 = 100.0;
  double mu_growth = 10.0;
  /// Conditioning of the penalized problem degrades sharply past ~1e6 for
  /// a limited-memory inner solver; multiplier updates do the rest.
  double mu_max = 1e6;
  double tol_constraint = 5e-6;  ///< on the scaled constraint infinity norm
  double tol_gradient = 0.1;     ///< on the scaled projected gradient
  bool verbose = false;
};

struct NlpReport {
  bool converged = false;
  int outer_iterations = 0;
  long inner_iterations = 0;
  double final_mu = 0.0;
  double constraint_violation = 0.0;  ///< scaled infinity norm
  double projected_gradient = 0.0;
  double objective = 0.0;
  VectorXd multipliers;  ///< defect multipliers in physical row units (5N+3)
};

/// Augmented-Lagrangian outer loop with bound-projected L-BFGS inner solves.
/// multipliers0, when given, warm-starts the duals (physical row units, as
/// reported in NlpReport::multipliers).
VectorXd solve_nlp(const Transcription& tr, const VectorXd& start, const NlpOptions& opt,
                   NlpReport* report = nullptr, const VectorXd* multipliers0 = nullptr);

/// Solves at a coarse grid first and refines by interpolation up to
/// tr.N, which keeps the basin of attraction manageable from a straight-line
/// start. Grid doubles per stage starting from n0.
VectorXd solve_nlp_refined(const Transcription& tr, const NlpOptions& opt, int n0 = 25,
                           NlpReport* report = nullptr);

/// Interpolates a coarse solution onto a finer grid of the same problem.
VectorXd refine_solution(const Transcription& coarse, const VectorXd& Zc,
                         const Transcription& fine);

/// Interpolates defect multipliers (which track the costate at interval
/// midpoints) onto a finer grid; terminal rows are copied.
VectorXd refine_multipliers(const Transcription& coarse, const VectorXd& mc,
                            const Transcription& fine);

}  // namespace guidance::direct
