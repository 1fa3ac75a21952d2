#include "guidance/shoot.hpp"

#include "guidance/homotopy.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace guidance;

namespace {
const VehicleParams P{};

/// The easy problem: level flight at the tiny cruise altitude, unit speed.
/// Its exact solution is p = (1, 0, t_f, 0, 0), t_f = 5 (straight flight over
/// 5 m at 1 m/s; H = p_x v - k0 = 0 forces p_x = 1, and pdot_v = -p_x cos 0
/// with p_v(t_f) = 0 forces p_v(0) = t_f).
struct DubinsBase {
  shoot::Phase1Data data{State{0.0, 0.5, 1.0, 0.0, 600.0}, 5.0, 0.5, 0.0};
  CostWeights w;
  DubinsBase() {
    w.k = 100.0;
    w.u_max = 25.0;
    w.h_c = 0.5;
    w.lambda = 0.0;
  }
};

shoot::NewtonOptions phase1_options() {
  shoot::NewtonOptions o;
  o.tol = 1e-10;
  o.r_scale = (VectorXd(6) << 25000.0, 250.0, 1.0, 1.0, 1.0, 1.0).finished();
  o.log_vars.assign(6, 0);
  o.log_vars[5] = 1;
  return o;
}
}  // namespace

TEST_CASE("newton: scalar quadratic") {
  const auto residual = [](const VectorXd& z) -> std::optional<VectorXd> {
    VectorXd r(1);
    r[0] = z[0] * z[0] - 4.0;
    return r;
  };
  shoot::NewtonOptions opt;
  opt.tol = 1e-12;
  const auto [z, rep] = shoot::newton_solve(residual, (VectorXd(1) << 3.0).finished(), opt);
  CHECK(rep.converged);
  CHECK(rep.iterations < 12);
  CHECK(z[0] == doctest::Approx(2.0).epsilon(1e-10));
}

TEST_CASE("newton: affine residual solves in one iteration") {
  std::mt19937 rng(21);
  std::uniform_real_distribution<double> ur(-1.0, 1.0);
  MatrixXd A(4, 4);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      A(i, j) = ur(rng) + (i == j ? 4.0 : 0.0);  // diagonally dominant
    }
  }
  VectorXd b(4);
  for (int i = 0; i < 4; ++i) b[i] = ur(rng);

  const auto residual = [&](const VectorXd& z) -> std::optional<VectorXd> {
    return VectorXd(A * z - b);
  };
  shoot::NewtonOptions opt;
  // One full step lands on the solution up to the forward-difference
  // Jacobian accuracy (~1e-8 relative).
  opt.tol = 1e-8;
  opt.polish_iters = 0;
  const auto [z, rep] = shoot::newton_solve(residual, VectorXd::Zero(4), opt);
  CHECK(rep.converged);
  CHECK(rep.iterations == 1);
  CHECK((A * z - b).lpNorm<Eigen::Infinity>() <= 1e-8);
}

TEST_CASE("newton: line search keeps |r|^2 decreasing on a stiff scalar problem") {
  // Undamped Newton on atan diverges from |z| > ~1.39; damping must save it.
  const auto residual = [](const VectorXd& z) -> std::optional<VectorXd> {
    VectorXd r(1);
    r[0] = std::atan(3.0 * z[0]);
    return r;
  };
  shoot::NewtonOptions opt;
  opt.tol = 1e-10;
  opt.max_iter = 80;
  const auto [z, rep] = shoot::newton_solve(residual, (VectorXd(1) << 5.0).finished(), opt);
  CHECK(rep.converged);
  CHECK(std::abs(z[0]) <= 1e-9);
  for (std::size_t i = 0; i + 1 < rep.residual_history.size(); ++i) {
    CHECK(rep.residual_history[i + 1] <= rep.residual_history[i] * (1.0 + 1e-12));
  }
}

TEST_CASE("newton: rank-deficient Jacobian is reported") {
  const auto residual = [](const VectorXd& z) -> std::optional<VectorXd> {
    VectorXd r(2);
    r[0] = z[0] + z[1] - 1.0;
    r[1] = 2.0 * (z[0] + z[1]) - 2.0 + 0.5;  // parallel rows, inconsistent
    return r;
  };
  const auto [z, rep] = shoot::newton_solve(residual, VectorXd::Zero(2), {});
  CHECK_FALSE(rep.converged);
  CHECK(rep.failure == shoot::NewtonFailure::singular_jacobian);
}

TEST_CASE("newton: unevaluable residual at the start is reported") {
  const auto residual = [](const VectorXd&) -> std::optional<VectorXd> { return std::nullopt; };
  const auto [z, rep] = shoot::newton_solve(residual, VectorXd::Zero(2), {});
  CHECK_FALSE(rep.converged);
  CHECK(rep.failure == shoot::NewtonFailure::residual_eval);
}

TEST_CASE("phase-1 residual vanishes at the analytic easy-problem solution") {
  const DubinsBase base;
  shoot::ShootingUnknowns1 z;
  z.p0 = Costate{1.0, 0.0, 5.0, 0.0, 0.0};
  z.t_f = 5.0;
  const auto r = shoot::residual_phase1(z, base.data, base.w, P);
  REQUIRE(r.has_value());
  CHECK(r->lpNorm<Eigen::Infinity>() <= 1e-9);
}

TEST_CASE("phase-1 shot from the printed first guess converges to the analytic solution") {
  const DubinsBase base;
  const auto residual = [&](const VectorXd& z) -> std::optional<VectorXd> {
    const auto r =
        shoot::residual_phase1(shoot::ShootingUnknowns1::from_vec(z), base.data, base.w, P);
    return r ? std::optional<VectorXd>(*r) : std::nullopt;
  };
  const VectorXd guess = (VectorXd(6) << 0.5, 1.0, 1.0, 1.0, 1.0, 6.0).finished();
  const auto [z, rep] = shoot::newton_solve(residual, guess, phase1_options());
  REQUIRE(rep.converged);
  CHECK(z[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(std::abs(z[1]) <= 1e-6);
  CHECK(z[2] == doctest::Approx(5.0).epsilon(1e-6));
  CHECK(std::abs(z[3]) <= 1e-6);
  CHECK(std::abs(z[4]) <= 1e-6);
  CHECK(z[5] == doctest::Approx(5.0).epsilon(1e-6));
}

TEST_CASE("phase-1 residual reacts to a small costate perturbation") {
  const DubinsBase base;
  shoot::ShootingUnknowns1 z;
  z.p0 = Costate{1.0, 0.0, 5.0, 1e-6, 0.0};  // p_gamma bumped
  z.t_f = 5.0;
  const auto r = shoot::residual_phase1(z, base.data, base.w, P);
  REQUIRE(r.has_value());
  CHECK(r->lpNorm<Eigen::Infinity>() > 1e-9);
}

TEST_CASE("phase-2 residual: identical halves zero the matching block exactly") {
  BoundaryConditions bc;
  CostWeights w;
  w.k = 100.0;
  w.u_max = 25.0;
  w.h_c = 250.0;
  w.lambda = 1.0;

  shoot::ShootingUnknowns2 z;
  z.xi_minus = z.xi_plus = State{12000.0, 250.0, 260.0, 0.0, 560.0};
  z.p_minus = z.p_plus = Costate{0.004, 0.01, 0.1, 1.0, 0.05};
  z.t_f = 2.0;

  const auto r = shoot::residual_phase2(z, bc, w, P);
  REQUIRE(r.has_value());
  CHECK(r->segment<10>(11).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("phase-2 matching rows are exactly linear in the unknowns") {
  BoundaryConditions bc;
  CostWeights w;
  w.k = 100.0;
  w.u_max = 25.0;
  w.h_c = 250.0;
  w.lambda = 1.0;

  shoot::ShootingUnknowns2 z0;
  z0.xi_minus = State{12000.0, 250.0, 260.0, 0.0, 560.0};
  z0.xi_plus = State{12010.0, 251.0, 259.0, 0.01, 559.0};
  z0.p_minus = Costate{0.004, 0.01, 0.1, 1.0, 0.05};
  z0.p_plus = Costate{0.005, 0.02, 0.12, 1.1, 0.04};
  z0.t_f = 2.0;

  std::mt19937 rng(31);
  std::uniform_real_distribution<double> ur(-1.0, 1.0);
  Vec21 d;
  for (int i = 0; i < 21; ++i) d[i] = ur(rng);
  d *= 1e-2;
  d[20] = 0.1;  // t_f moves too; the matching rows must not care

  const auto eval = [&](const Vec21& zz) {
    const auto r = shoot::residual_phase2(shoot::ShootingUnknowns2::from_vec(zz), bc, w, P);
    REQUIRE(r.has_value());
    return *r;
  };
  const Vec21 r0 = eval(z0.vec());
  const Vec21 r1 = eval(Vec21(z0.vec() + d));
  const Vec21 r2 = eval(Vec21(z0.vec() + 2.0 * d));
  const Eigen::Matrix<double, 10, 1> second =
      r2.segment<10>(11) - 2.0 * r1.segment<10>(11) + r0.segment<10>(11);
  // zero up to roundoff on the operand scale (x components are ~1e4)
  const double scale = z0.vec().cwiseAbs().maxCoeff();
  CHECK(second.lpNorm<Eigen::Infinity>() <= 16.0 * std::numeric_limits<double>::epsilon() * scale);
}

TEST_CASE("phase-2 reduced variant reproduces the first 11 rows") {
  BoundaryConditions bc;
  CostWeights w;
  w.k = 100.0;
  w.u_max = 25.0;
  w.h_c = 250.0;
  w.lambda = 1.0;

  shoot::ShootingUnknowns2 z;
  z.xi_minus = z.xi_plus = State{12000.0, 250.0, 260.0, 0.0, 560.0};
  z.p_minus = z.p_plus = Costate{0.004, 0.01, 0.1, 1.0, 0.05};
  z.t_f = 2.0;

  Vec11 zr;
  zr << z.xi_minus.vec(), z.p_minus.vec(), z.t_f;
  const auto full = shoot::residual_phase2(z, bc, w, P);
  const auto red = shoot::residual_phase2_reduced(zr, bc, w, P);
  REQUIRE(full.has_value());
  REQUIRE(red.has_value());
  CHECK((full->head<11>() - *red).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("newton runs are deterministic despite parallel Jacobian columns") {
  const DubinsBase base;
  const auto residual = [&](const VectorXd& z) -> std::optional<VectorXd> {
    const auto r =
        shoot::residual_phase1(shoot::ShootingUnknowns1::from_vec(z), base.data, base.w, P);
    return r ? std::optional<VectorXd>(*r) : std::nullopt;
  };
  const VectorXd guess = (VectorXd(6) << 0.5, 1.0, 1.0, 1.0, 1.0, 6.0).finished();
  shoot::NewtonOptions opt = phase1_options();
  opt.threads = 2;
  const auto [za, ra] = shoot::newton_solve(residual, guess, opt);
  const auto [zb, rb] = shoot::newton_solve(residual, guess, opt);
  REQUIRE(ra.converged);
  REQUIRE(rb.converged);
  CHECK((za - zb).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(ra.iterations == rb.iterations);
}

TEST_CASE("forward-difference Jacobian column agrees with central differences") {
  const DubinsBase base;
  const auto residual = [&](const Vec6& z) {
    const auto r =
        shoot::residual_phase1(shoot::ShootingUnknowns1::from_vec(z), base.data, base.w, P);
    REQUIRE(r.has_value());
    return *r;
  };
  const Vec6 z0 = (Vec6() << 0.9, 0.05, 4.5, 0.1, 0.1, 5.2).finished();
  const Vec6 r0 = residual(z0);
  std::mt19937 rng(41);
  std::uniform_int_distribution<int> pick(0, 5);
  for (int trial = 0; trial < 3; ++trial) {
    const int j = pick(rng);
    const double step_f = std::max(1e-7 * std::abs(z0[j]), 1e-9);
    Vec6 zf = z0;
    zf[j] += step_f;
    const Vec6 fwd = (residual(zf) - r0) / step_f;

    const double step_c = 1e-6 * std::max(std::abs(z0[j]), 1.0);
    Vec6 zp = z0, zm = z0;
    zp[j] += step_c;
    zm[j] -= step_c;
    const Vec6 ctr = (residual(zp) - residual(zm)) / (2.0 * step_c);
    for (int i = 0; i < 6; ++i) {
      CHECK(std::abs(fwd[i] - ctr[i]) <= 1e-4 * (1.0 + std::abs(ctr[i])));
    }
  }
}
