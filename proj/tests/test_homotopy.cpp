#include "guidance/homotopy.hpp"

#include <doctest.h>

#include <cmath>

using namespace guidance;

namespace {
BoundaryConditions bunt_bc() {
  BoundaryConditions bc;
  bc.xi0 = State{0.0, 0.0, 300.0, deg2rad(80.0), 600.0};
  bc.target = FinalTarget{25000.0, 0.0, deg2rad(-80.0)};
  return bc;
}
}  // namespace

TEST_CASE("phase-1 schedule at lambda = 0 is the printed easy problem") {
  const auto pt = homotopy::phase1_schedule(0.0, bunt_bc(), 250.0);
  CHECK(pt.h_c == 0.5);
  CHECK(pt.xi0.x == 0.0);
  CHECK(pt.xi0.h == 0.5);
  CHECK(pt.xi0.v == 1.0);
  CHECK(pt.xi0.gamma == 0.0);
  CHECK(pt.xi0.m == 600.0);
  CHECK(pt.x_target == 5.0);
  CHECK(pt.h_target == 0.5);
  CHECK(pt.gamma_target == 0.0);
}

TEST_CASE("phase-1 schedule at lambda = 1 hits the physical data bit-exactly") {
  const auto bc = bunt_bc();
  const auto pt = homotopy::phase1_schedule(1.0, bc, 250.0);
  CHECK(pt.h_c == 250.0);
  CHECK(pt.xi0.h == bc.xi0.h);
  CHECK(pt.xi0.v == bc.xi0.v);
  CHECK(pt.xi0.gamma == bc.xi0.gamma);
  CHECK(pt.x_target == bc.target.x);
  CHECK(pt.h_target == bc.target.h);
  CHECK(pt.gamma_target == bc.target.gamma);
}

TEST_CASE("phase-1 downrange target follows the quadratic rule") {
  const auto pt = homotopy::phase1_schedule(0.5, bunt_bc(), 250.0);
  // 5 + 0.25 (25000 - 5), exact in binary
  CHECK(pt.x_target == 6253.75);
}

TEST_CASE("phase-2 schedule endpoints and midpoint") {
  const auto p0 = homotopy::phase2_schedule(0.0);
  CHECK(p0.k == 100.0);
  CHECK(p0.u_max == 25.0);
  const auto p1 = homotopy::phase2_schedule(1.0);
  CHECK(p1.k == 2.0);
  CHECK(p1.u_max == 2.0);
  const auto pm = homotopy::phase2_schedule(0.5);
  CHECK(pm.k == 51.0);
  CHECK(pm.u_max == 13.5);
}

TEST_CASE("linear prediction: constant and affine paths") {
  const VectorXd a = (VectorXd(2) << 1.0, -2.0).finished();
  CHECK((homotopy::predict_linear(a, 0.2, a, 0.4, 0.7) - a).norm() == 0.0);

  const VectorXd m = (VectorXd(2) << 3.0, 0.5).finished();
  const auto line = [&](double lam) { return VectorXd(a + lam * m); };
  const VectorXd pred = homotopy::predict_linear(line(0.2), 0.2, line(0.5), 0.5, 0.9);
  CHECK((pred - line(0.9)).lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("continuation doubles the step after successes and lands exactly on 1") {
  homotopy::ContinuationConfig cfg;
  cfg.delta_init = 1e-3;
  cfg.delta_max = 0.05;
  int solves = 0;
  const auto solver = [&](double param, const VectorXd& guess) {
    ++solves;
    homotopy::StepOutcome out;
    out.converged = true;
    out.Z = guess;
    out.Z[0] = param;  // pretend the solution moves with the parameter
    out.iterations = 1;
    return out;
  };
  const auto res = homotopy::continue_path(solver, VectorXd::Zero(1), cfg);
  REQUIRE(res.ok);
  CHECK(res.reached == 1.0);
  CHECK(res.Z[0] == 1.0);
  // 0.001 doubling to the 0.05 cap, then ~20 capped steps: far fewer than a
  // fixed 1/delta_init march.
  CHECK(solves < 40);

  double prev = 0.0;
  for (const auto& a : res.trace.attempts) {
    CHECK(a.accepted);
    CHECK(a.param > prev);
    CHECK(a.delta <= cfg.delta_max + 1e-15);
    prev = a.param;
  }
}

TEST_CASE("continuation halves the step once after a single failure") {
  homotopy::ContinuationConfig cfg;
  cfg.delta_init = 0.05;
  cfg.delta_max = 0.05;
  bool failed_once = false;
  const auto solver = [&](double param, const VectorXd& guess) {
    homotopy::StepOutcome out;
    out.Z = guess;
    out.iterations = 1;
    if (param >= 0.5 && !failed_once) {
      failed_once = true;
      out.converged = false;
      return out;
    }
    out.converged = true;
    return out;
  };
  const auto res = homotopy::continue_path(solver, VectorXd::Zero(1), cfg);
  REQUIRE(res.ok);
  CHECK(res.trace.rejected_steps() == 1);
  // The rejected attempt is followed by one at half the step.
  bool seen_reject = false;
  double rejected_delta = 0.0;
  for (std::size_t i = 0; i < res.trace.attempts.size(); ++i) {
    const auto& a = res.trace.attempts[i];
    if (!a.accepted) {
      seen_reject = true;
      rejected_delta = a.delta;
      REQUIRE(i + 1 < res.trace.attempts.size());
      CHECK(res.trace.attempts[i + 1].delta == doctest::Approx(0.5 * rejected_delta));
      CHECK(res.trace.attempts[i + 1].accepted);
    }
  }
  CHECK(seen_reject);
}

TEST_CASE("continuation fails cleanly when the solver keeps rejecting") {
  homotopy::ContinuationConfig cfg;
  cfg.delta_init = 0.01;
  cfg.delta_min = 1e-5;
  const auto solver = [&](double param, const VectorXd& guess) {
    homotopy::StepOutcome out;
    out.Z = guess;
    out.converged = param < 0.3;  // wall at 0.3
    return out;
  };
  const auto res = homotopy::continue_path(solver, VectorXd::Zero(1), cfg);
  CHECK_FALSE(res.ok);
  CHECK(res.reached < 0.3001);
  CHECK(res.reached > 0.0);
}

TEST_CASE("predictor and no-predictor reach the same final solution") {
  // Solver with a narrow convergence radius around a curved solution path;
  // it only converges when the guess is close, which is what the predictor
  // buys.
  const auto path = [](double lam) {
    return (VectorXd(2) << std::sin(2.0 * lam), lam * lam + 1.0).finished();
  };
  const auto solver = [&](double param, const VectorXd& guess) {
    homotopy::StepOutcome out;
    out.iterations = 1;
    if ((guess - path(param)).norm() > 0.3) {
      out.converged = false;
      out.Z = guess;
      return out;
    }
    out.converged = true;
    out.Z = path(param);
    return out;
  };
  homotopy::ContinuationConfig with, without;
  with.linear_predictor = true;
  without.linear_predictor = false;
  const auto a = homotopy::continue_path(solver, path(0.0), with);
  const auto b = homotopy::continue_path(solver, path(0.0), without);
  REQUIRE(a.ok);
  REQUIRE(b.ok);
  CHECK((a.Z - b.Z).lpNorm<Eigen::Infinity>() <= 1e-6);
}
