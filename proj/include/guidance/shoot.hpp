#pragma once

#include "guidance/integrate.hpp"
#include "guidance/types.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

namespace guidance::shoot {

/// Phase-1 unknowns: initial costate and time of flight.
struct ShootingUnknowns1 {
  Costate p0;
  double t_f = 1.0;

  Vec6 vec() const {
    Vec6 z;
    z << p0.vec(), t_f;
    return z;
  }
  static ShootingUnknowns1 from_vec(const Eigen::Ref<const Vec6>& z) {
    return {Costate::from_vec(z.head<5>()), z[5]};
  }
};

/// Phase-2 unknowns: state and costate on both sides of t_f/2, plus the time
/// of flight. Dimension 21.
struct ShootingUnknowns2 {
  State xi_minus, xi_plus;
  Costate p_minus, p_plus;
  double t_f = 1.0;

  Vec21 vec() const {
    Vec21 z;
    z << xi_minus.vec(), xi_plus.vec(), p_minus.vec(), p_plus.vec(), t_f;
    return z;
  }
  static ShootingUnknowns2 from_vec(const Eigen::Ref<const Vec21>& z) {
    return {State::from_vec(z.segment<5>(0)), State::from_vec(z.segment<5>(5)),
            Costate::from_vec(z.segment<5>(10)), Costate::from_vec(z.segment<5>(15)), z[20]};
  }
};

/// Boundary data of the phase-1 problem, already evaluated at the current
/// continuation parameter.
struct Phase1Data {
  State xi0;
  double x_target = 0.0;
  double h_target = 0.0;
  double gamma_target = 0.0;
};

/// Forward shot from (xi0, p0) over [0, t_f]; returns
/// (x - x1, h - h1, gamma - gamma1, p_v, p_m, H) at t_f, or nullopt when the
/// flow breaks down.
std::optional<Vec6> residual_phase1(const ShootingUnknowns1& Z, const Phase1Data& data,
                                    const CostWeights& w, const VehicleParams& P,
                                    const integrate::FlowOptions& opt = {});

/// Shooting from the middle: backward leg to t = 0, forward leg to t = t_f.
/// Residual rows: xi(0) - xi0 (5), endpoint conditions (6), matching
/// xi- - xi+ (5) and p- - p+ (5).
std::optional<Vec21> residual_phase2(const ShootingUnknowns2& Z, const BoundaryConditions& bc,
                                     const CostWeights& w, const VehicleParams& P,
                                     const integrate::FlowOptions& opt = {});

/// Reduced variant with a single midpoint (11 unknowns, matching rows
/// eliminated). Off by default; the 21-dimensional form is the reference.
std::optional<Vec11> residual_phase2_reduced(const Vec11& Z, const BoundaryConditions& bc,
                                             const CostWeights& w, const VehicleParams& P,
                                             const integrate::FlowOptions& opt = {});

enum class NewtonFailure : std::uint8_t {
  none,
  residual_eval,      ///< residual not evaluable at the starting point
  max_iter,
  line_search,
  singular_jacobian,
};

const char* newton_failure_name(NewtonFailure f);

struct NewtonOptions {
  double tol = 1e-10;  ///< on the scaled residual infinity norm
  int max_iter = 40;
  /// Extra full steps taken after the tolerance is met; they sharpen the
  /// linear (matching) rows to roundoff.
  int polish_iters = 2;
  double armijo_c = 1e-4;
  double backtrack = 0.5;
  int max_backtracks = 30;
  /// Per-iteration cap on the scaled step; log-reparameterized variables are
  /// additionally capped at one e-fold so a wild direction cannot send t_f
  /// to astronomical values (whose flows are expensive to fail).
  double max_step = 1e3;
  double cond_limit = 1e14;
  double fd_rel = 1e-7;
  double fd_abs = 1e-9;
  int threads = 0;  ///< Jacobian columns in parallel; 0 = hardware default
  VectorXd x_scale;                    ///< per-unknown magnitudes (empty = 1)
  VectorXd r_scale;                    ///< per-residual magnitudes (empty = 1)
  std::vector<std::uint8_t> log_vars;  ///< variables solved in log space (> 0 kept)
};

struct NewtonReport {
  bool converged = false;
  int iterations = 0;
  double final_residual_norm = std::numeric_limits<double>::quiet_NaN();
  NewtonFailure failure = NewtonFailure::none;
  std::vector<double> residual_history;  ///< scaled inf-norm per accepted iterate
  std::vector<double> step_history;      ///< accepted line-search fractions
};

using ResidualFn = std::function<std::optional<VectorXd>(const VectorXd&)>;

/// Damped Newton with forward-difference Jacobian, Armijo backtracking on
/// |r|^2 and column/row scaling. Variables flagged in log_vars are positive
/// by construction.
std::pair<VectorXd, NewtonReport> newton_solve(const ResidualFn& residual, const VectorXd& z0,
                                               const NewtonOptions& opt = {});

}  // namespace guidance::shoot
