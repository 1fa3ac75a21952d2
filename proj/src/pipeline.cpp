#include "guidance/pipeline.hpp"

#include "guidance/direct.hpp"
#include "guidance/integrate.hpp"
#include "guidance/model.hpp"
#include "guidance/pmp.hpp"

#include <json.hpp>

#include <array>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

namespace guidance::pipeline {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

integrate::FlowOptions flow_options(const scenario::Scenario& sc, int samples = 0) {
  integrate::FlowOptions o;
  o.rtol = sc.solver.flow_rtol;
  o.atol = sc.solver.flow_atol;
  o.samples = samples;
  return o;
}

/// Continuation steps run on a cheaper integrator and a matching Newton
/// tolerance; the endpoint re-solve and every reported residual use the
/// scenario's full accuracy.
integrate::FlowOptions step_flow_options(const scenario::Scenario& sc) {
  integrate::FlowOptions o = flow_options(sc);
  o.rtol = std::max(o.rtol, 1e-10);
  o.atol = std::max(o.atol, 1e-12);
  return o;
}

CostWeights phase1_weights(const scenario::Scenario& sc, double lambda) {
  CostWeights w;
  w.k0 = sc.vehicle.k0;
  w.k1 = sc.vehicle.k1;
  w.k = sc.k_max;
  w.u_max = sc.u_max_init;
  w.h_c = homotopy::phase1_schedule(lambda, sc.bc, sc.vehicle.h_c, sc.phase1_init).h_c;
  w.lambda = lambda;
  return w;
}

/// Linear prediction can overshoot the final-time component to nonsense;
/// floor it instead of letting the solve reject the guess outright.
VectorXd sanitize_tf(VectorXd guess, Eigen::Index tf_index, double floor_value) {
  if (!(guess[tf_index] > floor_value)) {
    guess[tf_index] = floor_value;
  }
  return guess;
}

CostWeights phase2_weights(const scenario::Scenario& sc, double theta) {
  const auto pt = homotopy::phase2_schedule(theta, sc.phase2_range());
  CostWeights w;
  w.k0 = sc.vehicle.k0;
  w.k1 = sc.vehicle.k1;
  w.k = pt.k;
  w.u_max = pt.u_max;
  w.h_c = sc.vehicle.h_c;
  w.lambda = 1.0;
  return w;
}

VectorXd phase1_row_scales(const ProblemScales& s) {
  VectorXd r(6);
  r << s.x, s.h, 1.0, 1.0, 1.0, 1.0;
  return r;
}

VectorXd phase2_row_scales(const ProblemScales& s, const Vec5& costate_scale) {
  VectorXd r(21);
  r.segment<5>(0) = s.state();
  r[5] = s.x;
  r[6] = s.h;
  r[7] = 1.0;
  r[8] = 1.0;
  r[9] = 1.0;
  r[10] = 1.0;
  r.segment<5>(11) = s.state();
  r.segment<5>(16) = costate_scale;
  return r;
}

Vec5 costate_scales_from(const Costate& p) {
  Vec5 s = p.vec().cwiseAbs();
  const double floor_val = std::max(1e-3, 1e-3 * s.maxCoeff());
  return s.cwiseMax(floor_val);
}

shoot::NewtonOptions phase1_newton_options(const scenario::Scenario& sc,
                                           const ProblemScales& scales) {
  shoot::NewtonOptions o;
  o.tol = sc.solver.newton_tol_phase1;
  o.max_iter = sc.solver.newton_max_iter;
  o.r_scale = phase1_row_scales(scales);
  o.x_scale = VectorXd::Ones(6);
  o.log_vars.assign(6, 0);
  o.log_vars[5] = 1;  // t_f > 0
  return o;
}

shoot::NewtonOptions phase2_newton_options(const scenario::Scenario& sc,
                                           const ProblemScales& scales,
                                           const Vec5& costate_scale) {
  shoot::NewtonOptions o;
  o.tol = sc.solver.newton_tol_phase2;
  o.max_iter = sc.solver.newton_max_iter;
  o.r_scale = phase2_row_scales(scales, costate_scale);
  o.x_scale.resize(21);
  o.x_scale.segment<5>(0) = scales.state();
  o.x_scale.segment<5>(5) = scales.state();
  o.x_scale.segment<5>(10) = costate_scale;
  o.x_scale.segment<5>(15) = costate_scale;
  o.x_scale[20] = 1.0;
  o.log_vars.assign(21, 0);
  o.log_vars[20] = 1;  // t_f > 0
  return o;
}

shoot::NewtonOptions phase2_reduced_newton_options(const scenario::Scenario& sc,
                                                   const ProblemScales& scales,
                                                   const Vec5& costate_scale) {
  shoot::NewtonOptions o;
  o.tol = sc.solver.newton_tol_phase2;
  o.max_iter = sc.solver.newton_max_iter;
  o.r_scale.resize(11);
  o.r_scale.segment<5>(0) = scales.state();
  o.r_scale[5] = scales.x;
  o.r_scale[6] = scales.h;
  o.r_scale.segment<4>(7).setOnes();
  o.x_scale.resize(11);
  o.x_scale.segment<5>(0) = scales.state();
  o.x_scale.segment<5>(5) = costate_scale;
  o.x_scale[10] = 1.0;
  o.log_vars.assign(11, 0);
  o.log_vars[10] = 1;
  return o;
}

std::map<std::string, double> phase1_residual_table(const Vec6& r, const ProblemScales& s) {
  return {
      {"abs_x_tf_minus_xf", std::abs(r[0]) / s.x},
      {"abs_h_tf_minus_hf", std::abs(r[1]) / s.h},
      {"abs_gamma_tf_minus_gammaf", std::abs(r[2])},
      {"p_v_tf", std::abs(r[3])},
      {"p_m_tf", std::abs(r[4])},
      {"H_tf", std::abs(r[5])},
  };
}

std::map<std::string, double> phase2_residual_table(const Vec21& r, const ProblemScales& s,
                                                    const Vec5& costate_scale) {
  const Vec5 state_sc = s.state();
  const Vec5 match_xi = r.segment<5>(11).cwiseQuotient(state_sc);
  const Vec5 match_p = r.segment<5>(16).cwiseQuotient(costate_scale);
  return {
      {"abs_x_0_minus_x0", std::abs(r[0]) / s.x},
      {"abs_h_0_minus_h0", std::abs(r[1]) / s.h},
      {"abs_v_0_minus_v0", std::abs(r[2]) / s.v},
      {"abs_gamma_0_minus_gamma0", std::abs(r[3])},
      {"abs_m_0_minus_m0", std::abs(r[4]) / s.m},
      {"abs_x_tf_minus_xf", std::abs(r[5]) / s.x},
      {"abs_h_tf_minus_hf", std::abs(r[6]) / s.h},
      {"abs_gamma_tf_minus_gammaf", std::abs(r[7])},
      {"p_v_tf", std::abs(r[8])},
      {"p_m_tf", std::abs(r[9])},
      {"H_tf", std::abs(r[10])},
      {"match_state_norm", match_xi.norm()},
      {"match_costate_norm", match_p.norm()},
  };
}

/// Densely sampled trajectory of a phase-1 solution.
std::optional<Trajectory> sample_phase1(const scenario::Scenario& sc, double lambda,
                                        const shoot::ShootingUnknowns1& z, int samples) {
  const auto pt = homotopy::phase1_schedule(lambda, sc.bc, sc.vehicle.h_c, sc.phase1_init);
  const CostWeights w = phase1_weights(sc, lambda);
  Vec10 z0;
  z0 << pt.xi0.vec(), z.p0.vec();
  const auto res =
      integrate::flow(z0, z.t_f, w, sc.vehicle, integrate::Direction::forward,
                      flow_options(sc, samples));
  if (!res.ok) {
    return std::nullopt;
  }
  return res.trajectory;
}

/// Stitched backward + forward legs of a phase-2 solution.
std::optional<Trajectory> sample_phase2(const scenario::Scenario& sc, double theta,
                                        const shoot::ShootingUnknowns2& z, int samples) {
  const CostWeights w = phase2_weights(sc, theta);
  const double half = 0.5 * z.t_f;
  const int n_back = std::max(samples / 2, 2);
  const int n_fwd = std::max(samples - samples / 2, 2);

  Vec10 zm, zp;
  zm << z.xi_minus.vec(), z.p_minus.vec();
  zp << z.xi_plus.vec(), z.p_plus.vec();
  const auto back = integrate::flow(zm, half, w, sc.vehicle, integrate::Direction::backward,
                                    flow_options(sc, n_back));
  if (!back.ok) {
    return std::nullopt;
  }
  const auto fwd = integrate::flow(zp, half, w, sc.vehicle, integrate::Direction::forward,
                                   flow_options(sc, n_fwd));
  if (!fwd.ok) {
    return std::nullopt;
  }

  const auto& a = back.trajectory;
  const auto& b = fwd.trajectory;
  Trajectory tr;
  const Eigen::Index n = a.size() + b.size() - 1;  // midpoint appears once
  tr.t.resize(n);
  tr.states.resize(5, n);
  tr.costates.resize(5, n);
  tr.control.resize(n);
  tr.hamiltonian.resize(n);
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    tr.t[i] = a.t[i];
    tr.states.col(i) = a.states.col(i);
    tr.costates.col(i) = a.costates.col(i);
    tr.control[i] = a.control[i];
    tr.hamiltonian[i] = a.hamiltonian[i];
  }
  for (Eigen::Index j = 1; j < b.size(); ++j) {
    const Eigen::Index i = a.size() + j - 1;
    tr.t[i] = half + b.t[j];
    tr.states.col(i) = b.states.col(j);
    tr.costates.col(i) = b.costates.col(j);
    tr.control[i] = b.control[j];
    tr.hamiltonian[i] = b.hamiltonian[j];
  }
  return tr;
}

}  // namespace

ProblemScales scales_of(const scenario::Scenario& sc) {
  ProblemScales s;
  s.x = std::max(std::abs(sc.bc.target.x), 1.0);
  s.h = std::max(sc.vehicle.h_c, 1.0);
  s.v = std::max(sc.bc.xi0.v, 1.0);
  s.m = std::max(sc.bc.xi0.m, 1.0);
  return s;
}

CostDecomposition trajectory_cost(const Trajectory& tr, const CostWeights& w) {
  CostDecomposition c;
  if (tr.size() < 2) {
    return c;
  }
  c.time_term = w.k0 * (tr.t[tr.size() - 1] - tr.t[0]);
  for (Eigen::Index i = 0; i + 1 < tr.size(); ++i) {
    const double dt = tr.t[i + 1] - tr.t[i];
    const double dh0 = (tr.states(1, i) - w.h_c) / w.h_c;
    const double dh1 = (tr.states(1, i + 1) - w.h_c) / w.h_c;
    c.altitude_penalty += 0.5 * dt * w.k1 * (dh0 * dh0 + dh1 * dh1);
    c.control_penalty +=
        0.5 * dt * w.k * (tr.control[i] * tr.control[i] + tr.control[i + 1] * tr.control[i + 1]);
  }
  return c;
}

RunReport run_pipeline(const scenario::Scenario& sc, const PipelineOptions& opt) {
  scenario::validate(sc);
  const auto t_start = Clock::now();

  RunReport rep;
  rep.scenario_name = sc.name;
  const ProblemScales scales = scales_of(sc);
  const int samples = opt.samples > 0 ? opt.samples : sc.output.samples;
  const auto fopt = flow_options(sc);

  const auto run_direct_oracle = [&](RunReport& r) {
    if (!opt.run_direct) {
      return;
    }
    const auto t_dir = Clock::now();
    const CostWeights w_direct{sc.vehicle.k0, sc.vehicle.k1, 0.0, sc.vehicle.u_max,
                               sc.vehicle.h_c, 1.0};
    const auto tr_nlp = direct::transcribe(sc.bc, w_direct, sc.vehicle, sc.direct.n_ci);
    direct::NlpReport nrep;
    direct::solve_nlp_refined(tr_nlp, direct::NlpOptions{}, 25, &nrep);
    r.direct_run = true;
    r.direct_cost = nrep.objective;
    r.direct_seconds = seconds_since(t_dir);
  };

  // Warm-start path: a stored solution skips both continuations entirely.
  GuessStore store;
  bool store_loaded = false;
  if (!opt.warm_start_store.empty()) {
    store = GuessStore::load_or_empty(opt.warm_start_store);
    store_loaded = true;
    rep.warm.attempted = true;
    if (const auto hit = store.lookup(sc)) {
      const CostWeights w = phase2_weights(sc, 1.0);
      const Vec5 costate_scale = costate_scales_from(hit->p_minus);
      const auto nopt = phase2_newton_options(sc, scales, costate_scale);
      const auto residual = [&](const VectorXd& z) -> std::optional<VectorXd> {
        const auto r = shoot::residual_phase2(shoot::ShootingUnknowns2::from_vec(z), sc.bc, w,
                                              sc.vehicle, fopt);
        return r ? std::optional<VectorXd>(*r) : std::nullopt;
      };
      const auto [z_sol, nrep] = shoot::newton_solve(residual, hit->vec(), nopt);
      rep.warm.hit = true;
      rep.warm.newton_iterations = nrep.iterations;
      rep.warm.residual_norm = nrep.final_residual_norm;
      if (!nrep.converged) {
        rep.exit_code = 4;
        rep.error = "warm start: Newton failed from stored guess (" +
                    std::string(shoot::newton_failure_name(nrep.failure)) + ")";
        return rep;
      }
      rep.z2 = shoot::ShootingUnknowns2::from_vec(z_sol);
      rep.have_z2 = true;
      const auto r21 = shoot::residual_phase2(rep.z2, sc.bc, w, sc.vehicle, fopt);
      rep.phase2.residuals = phase2_residual_table(*r21, scales, costate_scale);
      rep.phase2.run = true;
      rep.phase2.ok = true;
      rep.phase2.reached = 1.0;
      if (const auto tr = sample_phase2(sc, 1.0, rep.z2, samples)) {
        rep.trajectory = *tr;
        rep.cost = trajectory_cost(*tr, w);
      }
      run_direct_oracle(rep);
      rep.ok = true;
      rep.total_seconds = seconds_since(t_start);
      return rep;
    }
  }

  // Phase 1: solve the easy problem at lambda = 0, then deform dynamics and
  // boundary data to the physical ones.
  const auto t_p1 = Clock::now();
  rep.phase1.run = true;
  shoot::NewtonOptions nopt1 = phase1_newton_options(sc, scales);

  const auto solve_phase1_at = [&](double lambda, const VectorXd& guess,
                                   const shoot::NewtonOptions& nopt,
                                   const integrate::FlowOptions& fo) -> homotopy::StepOutcome {
    const auto pt = homotopy::phase1_schedule(lambda, sc.bc, sc.vehicle.h_c, sc.phase1_init);
    const CostWeights w = phase1_weights(sc, lambda);
    const shoot::Phase1Data data{pt.xi0, pt.x_target, pt.h_target, pt.gamma_target};
    const auto residual = [&](const VectorXd& z) -> std::optional<VectorXd> {
      const auto r = shoot::residual_phase1(shoot::ShootingUnknowns1::from_vec(z), data, w,
                                            sc.vehicle, fo);
      return r ? std::optional<VectorXd>(*r) : std::nullopt;
    };
    const auto [z_sol, nrep] = shoot::newton_solve(residual, guess, nopt);
    return {nrep.converged, z_sol, nrep.iterations, nrep.final_residual_norm};
  };

  const integrate::FlowOptions fopt_step = step_flow_options(sc);
  shoot::NewtonOptions nopt1_step = nopt1;
  nopt1_step.tol = std::max(nopt1.tol, 1e-9);  // consistent with the step integrator
  nopt1_step.max_iter = std::min(nopt1.max_iter, 25);
  nopt1_step.polish_iters = 0;

  const auto base = solve_phase1_at(0.0, sc.solver.first_guess.vec(), nopt1, fopt);
  rep.phase1.trace.attempts.push_back(
      {0.0, 0.0, base.converged, base.iterations, base.residual_norm});
  if (!base.converged) {
    rep.exit_code = 3;
    rep.error = "phase 1: the base problem at lambda = 0 did not converge";
    rep.phase1.wall_seconds = seconds_since(t_p1);
    rep.total_seconds = seconds_since(t_start);
    return rep;
  }

  const auto c1 = homotopy::continue_path(
      [&](double lam, const VectorXd& guess) {
        return solve_phase1_at(lam, sanitize_tf(guess, 5, 0.1), nopt1_step, fopt_step);
      },
      base.Z, sc.phase1_continuation);
  for (const auto& a : c1.trace.attempts) {
    rep.phase1.trace.attempts.push_back(a);
  }
  rep.phase1.reached = c1.reached;

  VectorXd z1_final = c1.Z;
  if (c1.ok) {
    // Polish at the endpoint with the full iteration budget.
    const auto polished = solve_phase1_at(1.0, c1.Z, nopt1, fopt);
    if (polished.converged) {
      z1_final = polished.Z;
    }
  }
  rep.phase1.wall_seconds = seconds_since(t_p1);

  rep.z1 = shoot::ShootingUnknowns1::from_vec(z1_final);
  rep.have_z1 = true;

  if (!c1.ok) {
    rep.exit_code = 3;
    rep.error = "phase 1: continuation stalled at lambda = " + fmt(c1.reached);
    if (const auto tr = sample_phase1(sc, c1.reached, rep.z1, samples)) {
      rep.trajectory = *tr;  // partial artifact: last accepted solution
    }
    rep.total_seconds = seconds_since(t_start);
    return rep;
  }

  {
    const auto pt = homotopy::phase1_schedule(1.0, sc.bc, sc.vehicle.h_c, sc.phase1_init);
    const shoot::Phase1Data data{pt.xi0, pt.x_target, pt.h_target, pt.gamma_target};
    const auto r6 =
        shoot::residual_phase1(rep.z1, data, phase1_weights(sc, 1.0), sc.vehicle, fopt);
    if (r6) {
      rep.phase1.residuals = phase1_residual_table(*r6, scales);
    }
  }
  rep.phase1.ok = true;

  if (opt.phase1_only) {
    if (const auto tr = sample_phase1(sc, 1.0, rep.z1, samples)) {
      rep.trajectory = *tr;
      rep.cost = trajectory_cost(*tr, phase1_weights(sc, 1.0));
    }
    run_direct_oracle(rep);
    rep.ok = true;
    rep.total_seconds = seconds_since(t_start);
    return rep;
  }

  // Phase 2: extract the midpoint of the phase-1 extremal and lower
  // (k, u_max) with the midpoint formulation.
  const auto t_p2 = Clock::now();
  rep.phase2.run = true;

  Vec10 z0_full;
  z0_full << homotopy::phase1_schedule(1.0, sc.bc, sc.vehicle.h_c, sc.phase1_init).xi0.vec(),
      rep.z1.p0.vec();
  const auto mid_flow = integrate::flow(z0_full, 0.5 * rep.z1.t_f, phase1_weights(sc, 1.0),
                                        sc.vehicle, integrate::Direction::forward, fopt);
  if (!mid_flow.ok) {
    rep.exit_code = 4;
    rep.error = "phase 2: midpoint extraction flow failed";
    rep.phase2.wall_seconds = seconds_since(t_p2);
    rep.total_seconds = seconds_since(t_start);
    return rep;
  }

  shoot::ShootingUnknowns2 mid;
  mid.xi_minus = mid.xi_plus = State::from_vec(mid_flow.z_end.head<5>());
  mid.p_minus = mid.p_plus = Costate::from_vec(mid_flow.z_end.tail<5>());
  mid.t_f = rep.z1.t_f;

  const Vec5 costate_scale = costate_scales_from(mid.p_minus);
  const shoot::NewtonOptions nopt2 = phase2_newton_options(sc, scales, costate_scale);
  shoot::NewtonOptions nopt2_step = nopt2;
  nopt2_step.max_iter = std::min(nopt2.max_iter, 25);
  nopt2_step.polish_iters = 0;

  const auto solve_phase2_at = [&](double theta, const VectorXd& guess,
                                   const shoot::NewtonOptions& nopt,
                                   const integrate::FlowOptions& fo) -> homotopy::StepOutcome {
    const CostWeights w = phase2_weights(sc, theta);
    const auto residual = [&](const VectorXd& z) -> std::optional<VectorXd> {
      const auto r = shoot::residual_phase2(shoot::ShootingUnknowns2::from_vec(z), sc.bc, w,
                                            sc.vehicle, fo);
      return r ? std::optional<VectorXd>(*r) : std::nullopt;
    };
    const auto [z_sol, nrep] = shoot::newton_solve(residual, guess, nopt);
    return {nrep.converged, z_sol, nrep.iterations, nrep.final_residual_norm};
  };

  // Consistency of the two formulations at the junction.
  {
    const auto r21 =
        shoot::residual_phase2(mid, sc.bc, phase2_weights(sc, 0.0), sc.vehicle, fopt);
    if (r21) {
      rep.theta0_residual_norm =
          r21->cwiseQuotient(phase2_row_scales(scales, costate_scale)).lpNorm<Eigen::Infinity>();
    }
  }

  // Optional 11-unknown variant: one midpoint, matching rows eliminated.
  const auto solve_phase2_reduced_at =
      [&](double theta, const VectorXd& guess, const shoot::NewtonOptions& nopt,
          const integrate::FlowOptions& fo) -> homotopy::StepOutcome {
    const CostWeights w = phase2_weights(sc, theta);
    const auto residual = [&](const VectorXd& z) -> std::optional<VectorXd> {
      const auto r = shoot::residual_phase2_reduced(Vec11(z), sc.bc, w, sc.vehicle, fo);
      return r ? std::optional<VectorXd>(*r) : std::nullopt;
    };
    const auto [z_sol, nrep] = shoot::newton_solve(residual, guess, nopt);
    return {nrep.converged, z_sol, nrep.iterations, nrep.final_residual_norm};
  };
  const bool reduced = sc.solver.phase2_reduced;
  const auto nopt2r = phase2_reduced_newton_options(sc, scales, costate_scale);
  shoot::NewtonOptions nopt2r_step = nopt2r;
  nopt2r_step.max_iter = std::min(nopt2r.max_iter, 25);
  nopt2r_step.polish_iters = 0;

  Vec11 mid_reduced;
  mid_reduced << mid.xi_minus.vec(), mid.p_minus.vec(), mid.t_f;

  const auto base2 = reduced ? solve_phase2_reduced_at(0.0, mid_reduced, nopt2r, fopt)
                             : solve_phase2_at(0.0, mid.vec(), nopt2, fopt);
  rep.phase2.trace.attempts.push_back(
      {0.0, 0.0, base2.converged, base2.iterations, base2.residual_norm});
  if (!base2.converged) {
    rep.exit_code = 4;
    rep.error = "phase 2: the problem at theta = 0 did not converge";
    rep.phase2.wall_seconds = seconds_since(t_p2);
    rep.total_seconds = seconds_since(t_start);
    return rep;
  }

  const auto c2 = homotopy::continue_path(
      [&](double th, const VectorXd& guess) {
        return reduced
                   ? solve_phase2_reduced_at(th, sanitize_tf(guess, 10, 1.0), nopt2r_step,
                                             fopt_step)
                   : solve_phase2_at(th, sanitize_tf(guess, 20, 1.0), nopt2_step, fopt_step);
      },
      base2.Z, sc.phase2_continuation);
  for (const auto& a : c2.trace.attempts) {
    rep.phase2.trace.attempts.push_back(a);
  }
  rep.phase2.reached = c2.reached;

  VectorXd z2_final = c2.Z;
  if (c2.ok) {
    const auto polished = reduced ? solve_phase2_reduced_at(1.0, c2.Z, nopt2r, fopt)
                                  : solve_phase2_at(1.0, c2.Z, nopt2, fopt);
    if (polished.converged) {
      z2_final = polished.Z;
    }
  }
  rep.phase2.wall_seconds = seconds_since(t_p2);

  if (reduced) {
    shoot::ShootingUnknowns2 z2;
    z2.xi_minus = z2.xi_plus = State::from_vec(z2_final.segment<5>(0));
    z2.p_minus = z2.p_plus = Costate::from_vec(z2_final.segment<5>(5));
    z2.t_f = z2_final[10];
    rep.z2 = z2;
  } else {
    rep.z2 = shoot::ShootingUnknowns2::from_vec(z2_final);
  }
  rep.have_z2 = true;

  if (!c2.ok) {
    rep.exit_code = 4;
    rep.error = "phase 2: continuation stalled at theta = " + fmt(c2.reached);
    if (const auto tr = sample_phase2(sc, c2.reached, rep.z2, samples)) {
      rep.trajectory = *tr;
    }
    rep.total_seconds = seconds_since(t_start);
    return rep;
  }

  {
    const auto r21 =
        shoot::residual_phase2(rep.z2, sc.bc, phase2_weights(sc, 1.0), sc.vehicle, fopt);
    if (r21) {
      rep.phase2.residuals = phase2_residual_table(*r21, scales, costate_scale);
    }
  }
  rep.phase2.ok = true;

  if (const auto tr = sample_phase2(sc, 1.0, rep.z2, samples)) {
    rep.trajectory = *tr;
    rep.cost = trajectory_cost(*tr, phase2_weights(sc, 1.0));
  }

  run_direct_oracle(rep);

  if (store_loaded) {
    store.insert(sc, rep.z2);
    store.save(opt.warm_start_store);
  }

  rep.ok = true;
  rep.total_seconds = seconds_since(t_start);
  return rep;
}

void export_trajectory_csv(const Trajectory& tr, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw scenario::IoError("cannot open '" + path + "' for writing");
  }
  out << "t,x,h,v,gamma,m,p_x,p_h,p_v,p_gamma,p_m,u,H\n";
  out.precision(17);
  for (Eigen::Index i = 0; i < tr.size(); ++i) {
    out << tr.t[i];
    for (int j = 0; j < 5; ++j) {
      out << ',' << tr.states(j, i);
    }
    for (int j = 0; j < 5; ++j) {
      out << ',' << tr.costates(j, i);
    }
    out << ',' << tr.control[i] << ',' << tr.hamiltonian[i] << '\n';
  }
  if (!out) {
    throw scenario::IoError("write failed for '" + path + "'");
  }
}

Trajectory import_trajectory_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw scenario::IoError("cannot open '" + path + "' for reading");
  }
  std::string line;
  if (!std::getline(in, line) || line != "t,x,h,v,gamma,m,p_x,p_h,p_v,p_gamma,p_m,u,H") {
    throw scenario::IoError("'" + path + "' is not a trajectory export (bad header)");
  }
  std::vector<std::array<double, 13>> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    std::array<double, 13> row{};
    std::istringstream ls(line);
    std::string cell;
    for (int j = 0; j < 13; ++j) {
      if (!std::getline(ls, cell, ',')) {
        throw scenario::IoError("'" + path + "' line " + std::to_string(line_no) +
                                ": expected 13 columns");
      }
      row[j] = std::stod(cell);
    }
    rows.push_back(row);
  }
  Trajectory tr;
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  tr.t.resize(n);
  tr.states.resize(5, n);
  tr.costates.resize(5, n);
  tr.control.resize(n);
  tr.hamiltonian.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    tr.t[i] = rows[i][0];
    for (int j = 0; j < 5; ++j) {
      tr.states(j, i) = rows[i][1 + j];
      tr.costates(j, i) = rows[i][6 + j];
    }
    tr.control[i] = rows[i][11];
    tr.hamiltonian[i] = rows[i][12];
  }
  return tr;
}

scenario::KvNode report_to_kv(const RunReport& rep) {
  scenario::KvNode root;
  root.values["scenario"] = rep.scenario_name;
  root.values["status"] = rep.ok ? "ok" : "failed";
  root.values["exit_code"] = std::to_string(rep.exit_code);
  if (!rep.error.empty()) {
    root.values["error"] = rep.error;
  }

  const auto phase_to_kv = [](const PhaseReport& ph) {
    scenario::KvNode n;
    n.values["run"] = ph.run ? "true" : "false";
    n.values["ok"] = ph.ok ? "true" : "false";
    n.values["reached"] = fmt(ph.reached);
    n.values["accepted_steps"] = std::to_string(ph.trace.accepted_steps());
    n.values["rejected_steps"] = std::to_string(ph.trace.rejected_steps());
    n.values["newton_iterations"] = std::to_string(ph.trace.total_newton_iterations());
    if (!ph.residuals.empty()) {
      scenario::KvNode& res = n.children["residuals"];
      for (const auto& [k, v] : ph.residuals) {
        res.values[k] = fmt(v);
      }
    }
    return n;
  };
  root.children["phase1"] = phase_to_kv(rep.phase1);
  root.children["phase2"] = phase_to_kv(rep.phase2);
  if (std::isfinite(rep.theta0_residual_norm)) {
    root.children["phase2"].values["theta0_residual_norm"] = fmt(rep.theta0_residual_norm);
  }

  if (rep.have_z1) {
    scenario::KvNode& z = root.children["phase1"].children["solution"];
    z.values["p_x"] = fmt(rep.z1.p0.p_x);
    z.values["p_h"] = fmt(rep.z1.p0.p_h);
    z.values["p_v"] = fmt(rep.z1.p0.p_v);
    z.values["p_gamma"] = fmt(rep.z1.p0.p_gamma);
    z.values["p_m"] = fmt(rep.z1.p0.p_m);
    z.values["t_f"] = fmt(rep.z1.t_f);
  }
  if (rep.have_z2) {
    root.children["phase2"].values["t_f"] = fmt(rep.z2.t_f);
  }

  scenario::KvNode& cost = root.children["cost"];
  cost.values["time_term"] = fmt(rep.cost.time_term);
  cost.values["altitude_penalty"] = fmt(rep.cost.altitude_penalty);
  cost.values["control_penalty"] = fmt(rep.cost.control_penalty);
  cost.values["total"] = fmt(rep.cost.total());
  cost.values["total_without_regularization"] = fmt(rep.cost.without_regularization());

  if (rep.direct_run) {
    root.children["direct"].values["cost"] = fmt(rep.direct_cost);
  }
  if (rep.warm.attempted) {
    scenario::KvNode& wm = root.children["warm_start"];
    wm.values["hit"] = rep.warm.hit ? "true" : "false";
    wm.values["newton_iterations"] = std::to_string(rep.warm.newton_iterations);
    wm.values["residual_norm"] = fmt(rep.warm.residual_norm);
  }

  scenario::KvNode& timing = root.children["timing"];
  timing.values["phase1_seconds"] = fmt(rep.phase1.wall_seconds);
  timing.values["phase2_seconds"] = fmt(rep.phase2.wall_seconds);
  if (rep.direct_run) {
    timing.values["direct_seconds"] = fmt(rep.direct_seconds);
  }
  timing.values["total_seconds"] = fmt(rep.total_seconds);
  return root;
}

void write_report(const RunReport& rep, const std::string& path) {
  scenario::save_kv(report_to_kv(rep), path);
}

void write_trace(const RunReport& rep, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw scenario::IoError("cannot open '" + path + "' for writing");
  }
  out << "phase,param,delta,accepted,newton_iterations,residual_norm\n";
  out.precision(17);
  const auto dump = [&](const char* phase, const homotopy::ContinuationTrace& trace) {
    for (const auto& a : trace.attempts) {
      out << phase << ',' << a.param << ',' << a.delta << ',' << (a.accepted ? 1 : 0) << ','
          << a.newton_iterations << ',' << a.residual_norm << '\n';
    }
  };
  dump("phase1", rep.phase1.trace);
  dump("phase2", rep.phase2.trace);
  if (!out) {
    throw scenario::IoError("write failed for '" + path + "'");
  }
}

VectorXd GuessStore::key_of(const scenario::Scenario& sc) {
  VectorXd k(11);
  k << sc.bc.target.x, sc.bc.target.h, sc.bc.target.gamma, sc.bc.xi0.x, sc.bc.xi0.h, sc.bc.xi0.v,
      sc.bc.xi0.gamma, sc.bc.xi0.m, sc.vehicle.h_c, sc.vehicle.u_max, sc.k_min;
  return k;
}

VectorXd GuessStore::key_scales(const scenario::Scenario& sc) {
  const ProblemScales s = scales_of(sc);
  VectorXd k(11);
  k << s.x, s.h, 1.0, s.x, s.h, s.v, 1.0, s.m, s.h, 1.0, 1.0;
  return k;
}

GuessStore GuessStore::load_or_empty(const std::string& path) {
  GuessStore store;
  std::ifstream in(path);
  if (!in) {
    return store;
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw scenario::IoError("guess store '" + path + "' is not valid JSON: " + e.what());
  }
  for (const auto& item : j.value("entries", nlohmann::json::array())) {
    Entry e;
    const auto key = item.at("key").get<std::vector<double>>();
    const auto z = item.at("z").get<std::vector<double>>();
    if (key.size() != 11 || z.size() != 21) {
      continue;
    }
    e.key = Eigen::Map<const VectorXd>(key.data(), 11);
    e.z = Eigen::Map<const Vec21>(z.data());
    store.entries_.push_back(std::move(e));
  }
  return store;
}

void GuessStore::save(const std::string& path) const {
  nlohmann::json j;
  j["entries"] = nlohmann::json::array();
  for (const auto& e : entries_) {
    nlohmann::json item;
    item["key"] = std::vector<double>(e.key.data(), e.key.data() + e.key.size());
    item["z"] = std::vector<double>(e.z.data(), e.z.data() + e.z.size());
    j["entries"].push_back(std::move(item));
  }
  std::ofstream out(path);
  if (!out) {
    throw scenario::IoError("cannot open '" + path + "' for writing");
  }
  out << j.dump(1);
  if (!out) {
    throw scenario::IoError("write failed for '" + path + "'");
  }
}

void GuessStore::insert(const scenario::Scenario& sc, const shoot::ShootingUnknowns2& z) {
  const VectorXd key = key_of(sc);
  const VectorXd scale = key_scales(sc);
  for (auto& e : entries_) {
    if (((e.key - key).cwiseQuotient(scale)).lpNorm<Eigen::Infinity>() < 1e-9) {
      e.z = z.vec();  // same quantized boundary data: replace
      return;
    }
  }
  entries_.push_back({key, z.vec()});
}

std::optional<shoot::ShootingUnknowns2> GuessStore::lookup(const scenario::Scenario& sc) const {
  if (entries_.empty()) {
    return std::nullopt;
  }
  const VectorXd key = key_of(sc);
  const VectorXd scale = key_scales(sc);
  double best = std::numeric_limits<double>::infinity();
  const Entry* best_entry = nullptr;
  for (const auto& e : entries_) {
    const double d = ((e.key - key).cwiseQuotient(scale)).norm();
    if (d < best) {
      best = d;
      best_entry = &e;
    }
  }
  return shoot::ShootingUnknowns2::from_vec(best_entry->z);
}

}  // namespace guidance::pipeline
