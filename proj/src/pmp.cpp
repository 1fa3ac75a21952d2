#include "guidance/pmp.hpp"

#include "guidance/model.hpp"

#include <algorithm>
#include <cmath>

namespace guidance::pmp {

double hamiltonian(const State& s, const Costate& p, double u, const CostWeights& w,
                   const VehicleParams& P) {
  const Vec5 f = model::parametrized_rhs(s, u, w.lambda, P);
  return p.vec().dot(f) - model::running_cost(s, u, w);
}

Vec5 adjoint_rhs(const State& s, const Costate& p, double u, const CostWeights& w,
                 const VehicleParams& P) {
  const double cg = std::cos(s.gamma);
  const double sg = std::sin(s.gamma);
  const double lam = w.lambda;
  const double m = s.m;
  const double v = s.v;

  Vec5 dp;
  dp[0] = 0.0;
  dp[1] = lam * (p.p_v / m * model::drag_dh(s.h, v, P) -
                 p.p_gamma / (m * v) * model::lift_dh(s.h, v, u, P)) +
          2.0 * w.k1 / (w.h_c * w.h_c) * (s.h - w.h_c);
  dp[2] = -p.p_x * cg - p.p_h * sg +
          lam * (p.p_v / m * model::drag_dv(s.h, v, P) -
                 p.p_gamma / m * model::lift_over_v_dv(s.h, u, P) -
                 p.p_gamma / (v * v) * P.g * cg - p.p_v / m * P.c_s * P.t_max);
  dp[3] = p.p_x * v * sg - p.p_h * v * cg + lam * p.p_v * P.g * cg -
          lam * p.p_gamma / v * P.g * sg;
  dp[4] = lam * p.p_v / (m * m) * (P.t_max * (1.0 + P.c_s * v) - model::drag(s.h, v, P)) +
          lam * p.p_gamma / (v * m * m) * model::lift(s.h, v, u, P);
  return dp;
}

double switching_coefficient(const State& s, const Costate& p, const CostWeights& w,
                             const VehicleParams& P) {
  const double c = model::density(s.h, P) * P.ref_area() * s.v / (2.0 * s.m);
  return p.p_gamma * (1.0 + w.lambda * (c - 1.0));
}

ControlChoice pointwise_control(const State& s, const Costate& p, const CostWeights& w,
                                const VehicleParams& P) {
  const double beta1 = switching_coefficient(s, p, w, P);
  if (w.k > 0.0) {
    return {std::clamp(beta1 / (2.0 * w.k), -w.u_max, w.u_max), false};
  }
  if (beta1 == 0.0) {
    return {0.0, true};
  }
  return {beta1 > 0.0 ? w.u_max : -w.u_max, false};
}

SingularTerms singular_terms(const State& s, const Costate& p, const VehicleParams& P,
                             double k1, double h_c) {
  const double cg = std::cos(s.gamma);
  const double sg = std::sin(s.gamma);
  const double v = s.v;
  const double m = s.m;
  const double D = model::drag(s.h, v, P);
  const double vdot = (P.t_max * (1.0 + P.c_s * v) - D) / m - P.g * sg;

  SingularTerms t;
  t.A = (p.p_h * cg - p.p_x * sg) * vdot +
        P.g * cg * (p.p_x * cg + p.p_h * sg + p.p_v * P.c_s * P.t_max / m -
                    p.p_v / m * model::drag_dv(s.h, v, P)) +
        v * cg * (-p.p_v * D / (m * P.h_r) + 2.0 * k1 / (h_c * h_c) * (s.h - h_c));
  t.B = v * (p.p_h * sg + p.p_x * cg) - P.g * p.p_v * sg;
  return t;
}

std::optional<double> singular_control(const State& s, const Costate& p,
                                       const VehicleParams& P, double k1, double h_c) {
  const auto [A, B] = singular_terms(s, p, P, k1, h_c);
  // B is homogeneous of degree 1 in p and carries a factor v; an absolute
  // threshold would be scale-fragile.
  const double tol_b = 1e-9 * (1.0 + p.vec().norm() * s.v);
  if (std::abs(B) < tol_b) {
    return std::nullopt;
  }
  const double qs = model::dynamic_pressure(s.h, s.v, P) * P.ref_area();
  return s.m * s.v / qs * (P.g * std::cos(s.gamma) / s.v + A / B);
}

Vec3 transversality_residuals(const State& s_f, const Costate& p_f, double u_f,
                              const CostWeights& w, const VehicleParams& P) {
  return Vec3{p_f.p_v, p_f.p_m, hamiltonian(s_f, p_f, u_f, w, P)};
}

Vec10 extremal_rhs(const Vec10& z, const CostWeights& w, const VehicleParams& P) {
  const State s = State::from_vec(z.head<5>());
  const Costate p = Costate::from_vec(z.tail<5>());
  const double u = pointwise_control(s, p, w, P).u;
  Vec10 dz;
  dz.head<5>() = model::parametrized_rhs(s, u, w.lambda, P);
  dz.tail<5>() = adjoint_rhs(s, p, u, w, P);
  return dz;
}

}  // namespace guidance::pmp
