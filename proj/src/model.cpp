#include "guidance/model.hpp"

#include <cmath>

namespace guidance::model {

double density(double h, const VehicleParams& P) {
  return P.rho0 * std::exp(-h / P.h_r);
}

double dynamic_pressure(double h, double v, const VehicleParams& P) {
  return 0.5 * density(h, P) * v * v;
}

double drag(double h, double v, const VehicleParams& P) {
  return dynamic_pressure(h, v, P) * P.ref_area() * P.c_d0;
}

double lift(double h, double v, double u, const VehicleParams& P) {
  return dynamic_pressure(h, v, P) * P.ref_area() * u;
}

double drag_dh(double h, double v, const VehicleParams& P) {
  return -drag(h, v, P) / P.h_r;
}

double drag_dv(double h, double v, const VehicleParams& P) {
  return density(h, P) * v * P.ref_area() * P.c_d0;
}

double lift_dh(double h, double v, double u, const VehicleParams& P) {
  return -lift(h, v, u, P) / P.h_r;
}

double lift_over_v_dv(double h, double u, const VehicleParams& P) {
  return 0.5 * density(h, P) * P.ref_area() * u;
}

Vec5 full_rhs(const State& s, double u, const VehicleParams& P) {
  const double cg = std::cos(s.gamma);
  const double sg = std::sin(s.gamma);
  Vec5 f;
  f[0] = s.v * cg;
  f[1] = s.v * sg;
  f[2] = (P.t_max * (1.0 + P.c_s * s.v) - drag(s.h, s.v, P)) / s.m - P.g * sg;
  f[3] = lift(s.h, s.v, u, P) / (s.m * s.v) - P.g * cg / s.v;
  f[4] = -P.c_s * P.t_max;
  return f;
}

Vec5 parametrized_rhs(const State& s, double u, double lambda, const VehicleParams& P) {
  const double cg = std::cos(s.gamma);
  const double sg = std::sin(s.gamma);
  // a(xi,u) = (qS/(mv) - 1) u - g cos(gamma)/v, with qS/(mv) = rho S v / (2m)
  const double c = dynamic_pressure(s.h, s.v, P) * P.ref_area() / (s.m * s.v);
  const double a = (c - 1.0) * u - P.g * cg / s.v;
  Vec5 f;
  f[0] = s.v * cg;
  f[1] = s.v * sg;
  f[2] = lambda * ((P.t_max * (1.0 + P.c_s * s.v) - drag(s.h, s.v, P)) / s.m - P.g * sg);
  f[3] = lambda * a + u;
  f[4] = -lambda * P.c_s * P.t_max;
  return f;
}

double running_cost(const State& s, double u, const CostWeights& w) {
  const double dh = (s.h - w.h_c) / w.h_c;
  return w.k0 + w.k1 * dh * dh + w.k * u * u;
}

void dynamics_jacobian(const State& s, double u, double lambda, const VehicleParams& P,
                       Mat5& df_dx, Vec5& df_du) {
  const double cg = std::cos(s.gamma);
  const double sg = std::sin(s.gamma);
  const double D = drag(s.h, s.v, P);
  const double c = 0.5 * density(s.h, P) * P.ref_area() * s.v / s.m;  // qS/(mv)

  df_dx.setZero();
  // x' = v cos g
  df_dx(0, 2) = cg;
  df_dx(0, 3) = -s.v * sg;
  // h' = v sin g
  df_dx(1, 2) = sg;
  df_dx(1, 3) = s.v * cg;
  // v' = lambda ((t_max(1+c_s v) - D)/m - g sin g)
  df_dx(2, 1) = lambda * (D / (P.h_r * s.m));
  df_dx(2, 2) = lambda * (P.t_max * P.c_s - drag_dv(s.h, s.v, P)) / s.m;
  df_dx(2, 3) = -lambda * P.g * cg;
  df_dx(2, 4) = -lambda * (P.t_max * (1.0 + P.c_s * s.v) - D) / (s.m * s.m);
  // gamma' = lambda ((c-1)u - g cos g / v) + u
  df_dx(3, 1) = -lambda * c * u / P.h_r;
  df_dx(3, 2) = lambda * (0.5 * density(s.h, P) * P.ref_area() * u / s.m + P.g * cg / (s.v * s.v));
  df_dx(3, 3) = lambda * P.g * sg / s.v;
  df_dx(3, 4) = -lambda * c * u / s.m;
  // m' has no state dependence

  df_du.setZero();
  df_du[3] = lambda * (c - 1.0) + 1.0;
}

void running_cost_gradient(const State& s, double u, const CostWeights& w,
                           Vec5& dc_dx, double& dc_du) {
  dc_dx.setZero();
  dc_dx[1] = 2.0 * w.k1 * (s.h - w.h_c) / (w.h_c * w.h_c);
  dc_du = 2.0 * w.k * u;
}

}  // namespace guidance::model
