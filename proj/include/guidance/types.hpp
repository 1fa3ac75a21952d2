#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>

namespace guidance {

using Vec2  = Eigen::Vector2d;
using Vec3  = Eigen::Vector3d;
using Vec5  = Eigen::Matrix<double, 5, 1>;
using Vec6  = Eigen::Matrix<double, 6, 1>;
using Vec10 = Eigen::Matrix<double, 10, 1>;
using Vec11 = Eigen::Matrix<double, 11, 1>;
using Vec21 = Eigen::Matrix<double, 21, 1>;
using Mat5  = Eigen::Matrix<double, 5, 5>;
using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double pi = 3.14159265358979323846;

inline double deg2rad(double deg) { return deg * pi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / pi; }

/// Point-mass state in the vertical plane. Angles are radians everywhere in
/// code; degrees appear only at the scenario-file boundary.
struct State {
  double x = 0.0;      ///< downrange [m]
  double h = 0.0;      ///< altitude [m]
  double v = 0.0;      ///< speed [m/s]
  double gamma = 0.0;  ///< flight-path angle [rad]
  double m = 0.0;      ///< mass [kg]

  Vec5 vec() const {
    Vec5 z;
    z << x, h, v, gamma, m;
    return z;
  }
  static State from_vec(const Eigen::Ref<const Vec5>& z) {
    return State{z[0], z[1], z[2], z[3], z[4]};
  }
};

/// Adjoint vector, components dual to State. p_gamma is the switching
/// function of the non-regularized problem.
struct Costate {
  double p_x = 0.0;
  double p_h = 0.0;
  double p_v = 0.0;
  double p_gamma = 0.0;
  double p_m = 0.0;

  Vec5 vec() const {
    Vec5 z;
    z << p_x, p_h, p_v, p_gamma, p_m;
    return z;
  }
  static Costate from_vec(const Eigen::Ref<const Vec5>& z) {
    return Costate{z[0], z[1], z[2], z[3], z[4]};
  }
};

/// One point of an extremal. Only normal extremals are handled: p0 = -1 is
/// baked into every Hamiltonian evaluation.
struct ExtremalPoint {
  State state;
  Costate costate;

  Vec10 vec() const {
    Vec10 z;
    z << state.vec(), costate.vec();
    return z;
  }
  static ExtremalPoint from_vec(const Eigen::Ref<const Vec10>& z) {
    return ExtremalPoint{State::from_vec(z.head<5>()), Costate::from_vec(z.tail<5>())};
  }
};

/// Physical constants of the vehicle and environment. The reference area is
/// always derived from the diameter, never stored separately.
struct VehicleParams {
  double d = 0.65;        ///< body diameter [m]
  double c_d0 = 0.4;      ///< zero-lift drag coefficient [-]
  double t_max = 5000.0;  ///< maximum thrust [N]
  double c_s = 4e-4;      ///< specific fuel consumption [kg/(s N)]
  double g = 9.81;        ///< gravity [m/s^2]
  double rho0 = 1.225;    ///< sea-level density [kg/m^3]
  double h_r = 7314.0;    ///< atmosphere reference altitude [m]
  double u_max = 2.0;     ///< nominal control saturation [-]
  double h_c = 250.0;     ///< nominal cruise altitude [m]
  double k0 = 1.0;        ///< time-of-flight weight [-]
  double k1 = 1.0;        ///< cruise-altitude penalty weight [-]

  double ref_area() const { return pi * d * d / 4.0; }
};

/// Final-time targets. Speed and mass are free at t_f; only x, h and gamma
/// are constrained.
struct FinalTarget {
  double x = 25000.0;
  double h = 0.0;
  double gamma = -80.0 * pi / 180.0;
};

struct BoundaryConditions {
  State xi0{0.0, 0.0, 300.0, 80.0 * pi / 180.0, 600.0};
  FinalTarget target{};
};

/// Weights and homotopy knobs selecting which member of the problem family
/// is being evaluated.
struct CostWeights {
  double k0 = 1.0;
  double k1 = 1.0;
  double k = 0.0;        ///< control regularization weight (k*u^2 term)
  double u_max = 2.0;    ///< current control saturation
  double h_c = 250.0;    ///< current cruise altitude [m]
  double lambda = 1.0;   ///< dynamics homotopy factor in [0,1]
};

struct CostDecomposition {
  double time_term = 0.0;         ///< k0 * t_f
  double altitude_penalty = 0.0;  ///< integral of k1 ((h-h_c)/h_c)^2
  double control_penalty = 0.0;   ///< integral of k u^2

  double total() const { return time_term + altitude_penalty + control_penalty; }
  double without_regularization() const { return time_term + altitude_penalty; }
};

/// Sampled extremal (or direct-method) trajectory. Columns indexed by
/// sample, rows by state/costate component.
struct Trajectory {
  VectorXd t;            ///< sample times [s], ascending
  MatrixXd states;       ///< 5 x n
  MatrixXd costates;     ///< 5 x n (zero for direct-method output)
  VectorXd control;      ///< n
  VectorXd hamiltonian;  ///< n (zero for direct-method output)

  Eigen::Index size() const { return t.size(); }
  State state_at(Eigen::Index i) const { return State::from_vec(states.col(i)); }
  Costate costate_at(Eigen::Index i) const { return Costate::from_vec(costates.col(i)); }
};

}  // namespace guidance
