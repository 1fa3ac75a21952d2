#pragma once

#include "guidance/types.hpp"

#include <optional>

namespace guidance::pmp {

/// Hamiltonian of the regularized homotopy family,
///   H = <p, f_lambda(xi,u)> - f0_k(xi,u),
/// with the normal multiplier p0 = -1 baked in. At lambda = 1, k = 0 this is
/// the Hamiltonian of the original problem.
double hamiltonian(const State& s, const Costate& p, double u, const CostWeights& w,
                   const VehicleParams& P);

/// Adjoint equations p' = -dH/dxi, componentwise. At lambda = 1 these reduce
/// to the non-parametrized adjoint system.
Vec5 adjoint_rhs(const State& s, const Costate& p, double u, const CostWeights& w,
                 const VehicleParams& P);

/// Coefficient of the linear-in-u term of H:
///   beta1 = p_gamma (1 + lambda (rho S v / (2m) - 1)).
/// Its sign drives the bang control; beta1/(2k) is the unconstrained
/// regularized maximizer.
double switching_coefficient(const State& s, const Costate& p, const CostWeights& w,
                             const VehicleParams& P);

struct ControlChoice {
  double u = 0.0;
  /// Set only on the k = 0 branch when beta1 vanishes and the maximizer is
  /// undetermined; the returned u is then the 0 tie-break.
  bool singular_candidate = false;
};

/// Pointwise maximizer of H over |u| <= u_max. k > 0: unique clamp of the
/// concave quadratic; k = 0: bang by the sign of beta1.
ControlChoice pointwise_control(const State& s, const Costate& p, const CostWeights& w,
                                const VehicleParams& P);

struct SingularTerms {
  double A = 0.0;
  double B = 0.0;
};

/// The A and B coefficients of the singular-control relation for the
/// lambda = 1, non-regularized problem. Both are homogeneous of degree 1 in p.
SingularTerms singular_terms(const State& s, const Costate& p, const VehicleParams& P,
                             double k1, double h_c);

/// Singular control u_s = mv/(qS) (g cos(gamma)/v + A/B), valid where the
/// switching function vanishes. Returns nullopt when |B| is below a
/// scale-aware degeneracy threshold.
std::optional<double> singular_control(const State& s, const Costate& p,
                                       const VehicleParams& P, double k1, double h_c);

/// Residuals that must vanish at the final time of a solution:
/// (p_v(t_f), p_m(t_f), H(t_f)). v and m are free at t_f and the final time
/// itself is free.
Vec3 transversality_residuals(const State& s_f, const Costate& p_f, double u_f,
                              const CostWeights& w, const VehicleParams& P);

/// Coupled extremal right-hand side: z = (xi, p), control closed by
/// pointwise_control at every evaluation.
Vec10 extremal_rhs(const Vec10& z, const CostWeights& w, const VehicleParams& P);

}  // namespace guidance::pmp
