#pragma once

#include "guidance/types.hpp"

namespace guidance::model {

/// Exponential atmosphere rho0 * exp(-h/h_r). Valid below ~20 km.
double density(double h, const VehicleParams& P);

/// Dynamic pressure 0.5 * rho(h) * v^2 [Pa].
double dynamic_pressure(double h, double v, const VehicleParams& P);

/// Drag q(h,v) * S * c_d0 [N]. Constant drag coefficient (no induced term).
double drag(double h, double v, const VehicleParams& P);

/// Lift q(h,v) * S * u [N]; the lift coefficient u is the control.
double lift(double h, double v, double u, const VehicleParams& P);

// Analytic partials of the aerodynamic forces, used by the adjoint equations
// and the transcription Jacobians. With the exponential atmosphere:
//   dD/dh = -D/h_r                (rho' = -rho/h_r)
//   dD/dv = rho v S c_d0 = 2D/v
//   dL/dh = -L/h_r
//   d(L/v)/dv = rho S u / 2       (L/v = rho v S u / 2 is linear in v)
double drag_dh(double h, double v, const VehicleParams& P);
double drag_dv(double h, double v, const VehicleParams& P);
double lift_dh(double h, double v, double u, const VehicleParams& P);
double lift_over_v_dv(double h, double u, const VehicleParams& P);

/// Full vehicle dynamics, thrust locked at maximum:
///   (v cos g, v sin g, [t_max(1+c_s v) - D]/m - g sin g,
///    L/(mv) - g cos g / v, -c_s t_max)
Vec5 full_rhs(const State& s, double u, const VehicleParams& P);

/// Homotopy dynamics f_lambda. lambda = 0 is the reduced kinematic model
/// (gamma' = u, v and m frozen); lambda = 1 recovers full_rhs.
Vec5 parametrized_rhs(const State& s, double u, double lambda, const VehicleParams& P);

/// Running cost k0 + k1 ((h - h_c)/h_c)^2 + k u^2.
double running_cost(const State& s, double u, const CostWeights& w);

/// Analytic Jacobian of parametrized_rhs with respect to state and control.
void dynamics_jacobian(const State& s, double u, double lambda, const VehicleParams& P,
                       Mat5& df_dx, Vec5& df_du);

/// Gradient of running_cost with respect to state (only h enters) and control.
void running_cost_gradient(const State& s, double u, const CostWeights& w,
                           Vec5& dc_dx, double& dc_du);

}  // namespace guidance::model
