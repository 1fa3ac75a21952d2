#include "guidance/direct.hpp"

#include "guidance/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>

namespace guidance::direct {

State Transcription::node(const VectorXd& Z, int i) const {
  if (i == 0) {
    return xi0;
  }
  return State::from_vec(Z.segment<5>(state_index(i)));
}

double Transcription::control(const VectorXd& Z, int i) const {
  return Z[control_index(i)];
}

double Transcription::objective(const VectorXd& Z) const {
  const double h = Z[tf_index()] / N;
  double J = 0.0;
  State prev = xi0;
  for (int i = 1; i <= N; ++i) {
    const State cur = node(Z, i);
    const double u = control(Z, i);
    J += 0.5 * h * (model::running_cost(prev, u, w) + model::running_cost(cur, u, w));
    prev = cur;
  }
  return J;
}

void Transcription::constraints(const VectorXd& Z, VectorXd& c) const {
  c.resize(n_constraints());
  const double h = Z[tf_index()] / N;
  State prev = xi0;
  Vec5 f_prev, f_cur;
  for (int i = 1; i <= N; ++i) {
    const State cur = node(Z, i);
    const double u = control(Z, i);
    f_prev = model::parametrized_rhs(prev, u, w.lambda, P);
    f_cur = model::parametrized_rhs(cur, u, w.lambda, P);
    c.segment<5>(5 * (i - 1)) = cur.vec() - prev.vec() - 0.5 * h * (f_prev + f_cur);
    prev = cur;
  }
  const State last = node(Z, N);
  c[5 * N + 0] = last.x - x_f;
  c[5 * N + 1] = last.h - h_f;
  c[5 * N + 2] = last.gamma - gamma_f;
}

void Transcription::objective_gradient(const VectorXd& Z, VectorXd& g) const {
  g.setZero(dim());
  const double t_f = Z[tf_index()];
  const double h = t_f / N;
  State prev = xi0;
  Vec5 dc_dx;
  double dc_du;
  double J = 0.0;
  for (int i = 1; i <= N; ++i) {
    const State cur = node(Z, i);
    const double u = control(Z, i);
    const double c_prev = model::running_cost(prev, u, w);
    const double c_cur = model::running_cost(cur, u, w);
    J += 0.5 * h * (c_prev + c_cur);

    model::running_cost_gradient(prev, u, w, dc_dx, dc_du);
    if (i > 1) {
      g.segment<5>(state_index(i - 1)) += 0.5 * h * dc_dx;
    }
    g[control_index(i)] += 0.5 * h * dc_du;

    model::running_cost_gradient(cur, u, w, dc_dx, dc_du);
    g.segment<5>(state_index(i)) += 0.5 * h * dc_dx;
    g[control_index(i)] += 0.5 * h * dc_du;

    prev = cur;
  }
  // h = t_f/N multiplies the quadrature linearly.
  g[tf_index()] += J / t_f;
}

void Transcription::add_constraint_gradient(const VectorXd& Z, const VectorXd& y,
                                            VectorXd& g) const {
  const double t_f = Z[tf_index()];
  const double h = t_f / N;
  State prev = xi0;
  Mat5 A_prev, A_cur;
  Vec5 B_prev, B_cur;
  for (int i = 1; i <= N; ++i) {
    const State cur = node(Z, i);
    const double u = control(Z, i);
    model::dynamics_jacobian(prev, u, w.lambda, P, A_prev, B_prev);
    model::dynamics_jacobian(cur, u, w.lambda, P, A_cur, B_cur);
    const Vec5 f_prev = model::parametrized_rhs(prev, u, w.lambda, P);
    const Vec5 f_cur = model::parametrized_rhs(cur, u, w.lambda, P);
    const Vec5 yi = y.segment<5>(5 * (i - 1));

    // d(c_i)/d(xi_i) = I - h/2 A(xi_i, u_i)
    g.segment<5>(state_index(i)) += yi - 0.5 * h * A_cur.transpose() * yi;
    // d(c_i)/d(xi_{i-1}) = -I - h/2 A(xi_{i-1}, u_i)
    if (i > 1) {
      g.segment<5>(state_index(i - 1)) += -yi - 0.5 * h * A_prev.transpose() * yi;
    }
    // d(c_i)/d(u_i) = -h/2 (B_prev + B_cur)
    g[control_index(i)] += -0.5 * h * (B_prev + B_cur).dot(yi);
    // d(c_i)/d(t_f) = -(f_prev + f_cur)/(2N)
    g[tf_index()] += -0.5 / N * (f_prev + f_cur).dot(yi);

    prev = cur;
  }
  // Terminal rows pin x, h and gamma of the last node (v and m stay free).
  const int last = state_index(N);
  g[last + 0] += y[5 * N + 0];
  g[last + 1] += y[5 * N + 1];
  g[last + 3] += y[5 * N + 2];
}

VectorXd Transcription::warm_start(double t_f_guess) const {
  VectorXd Z(dim());
  const double mdot = -P.c_s * P.t_max * w.lambda;
  for (int i = 1; i <= N; ++i) {
    const double a = static_cast<double>(i) / N;
    State s;
    s.x = xi0.x + a * (x_f - xi0.x);
    s.h = xi0.h + a * (h_f - xi0.h);
    s.v = xi0.v;
    s.gamma = xi0.gamma + a * (gamma_f - xi0.gamma);
    s.m = xi0.m + mdot * a * t_f_guess;
    Z.segment<5>(state_index(i)) = s.vec();
    Z[control_index(i)] = 0.0;
  }
  Z[tf_index()] = t_f_guess;
  return Z;
}

void Transcription::bounds(VectorXd& lo, VectorXd& hi) const {
  lo.setConstant(dim(), -1e9);
  hi.setConstant(dim(), 1e9);
  for (int i = 1; i <= N; ++i) {
    const int s = state_index(i);
    lo[s + 2] = 0.5;                // v > 0 keeps the model evaluable
    hi[s + 2] = 50.0 * std::max(xi0.v, 1.0);
    lo[s + 3] = -pi;
    hi[s + 3] = pi;
    lo[s + 4] = 1.0;                // m > 0
    hi[s + 4] = 2.0 * xi0.m;
    lo[control_index(i)] = -w.u_max;
    hi[control_index(i)] = w.u_max;
  }
  lo[tf_index()] = t_f_min;
  hi[tf_index()] = t_f_max;
}

VectorXd Transcription::variable_scales() const {
  VectorXd s(dim());
  const double x_sc = std::max(std::abs(x_f), 1.0);
  const double h_sc = std::max(w.h_c, 1.0);
  const double v_sc = std::max(xi0.v, 1.0);
  const double m_sc = std::max(xi0.m, 1.0);
  for (int i = 1; i <= N; ++i) {
    const int b = state_index(i);
    s[b + 0] = x_sc;
    s[b + 1] = h_sc;
    s[b + 2] = v_sc;
    s[b + 3] = 1.0;
    s[b + 4] = m_sc;
    s[control_index(i)] = std::max(w.u_max, 1.0);
  }
  s[tf_index()] = std::max(std::abs(x_f) / std::max(xi0.v, 1.0), 1.0);
  return s;
}

VectorXd Transcription::constraint_scales() const {
  VectorXd s(n_constraints());
  const double x_sc = std::max(std::abs(x_f), 1.0);
  const double h_sc = std::max(w.h_c, 1.0);
  const double v_sc = std::max(xi0.v, 1.0);
  const double m_sc = std::max(xi0.m, 1.0);
  for (int i = 0; i < N; ++i) {
    s[5 * i + 0] = x_sc;
    s[5 * i + 1] = h_sc;
    s[5 * i + 2] = v_sc;
    s[5 * i + 3] = 1.0;
    s[5 * i + 4] = m_sc;
  }
  s[5 * N + 0] = x_sc;
  s[5 * N + 1] = h_sc;
  s[5 * N + 2] = 1.0;
  return s;
}

Trajectory Transcription::to_trajectory(const VectorXd& Z) const {
  Trajectory tr;
  const double t_f = Z[tf_index()];
  tr.t.resize(N + 1);
  tr.states.resize(5, N + 1);
  tr.costates.setZero(5, N + 1);
  tr.control.resize(N + 1);
  tr.hamiltonian.setZero(N + 1);
  for (int i = 0; i <= N; ++i) {
    tr.t[i] = t_f * i / N;
    tr.states.col(i) = node(Z, i).vec();
    tr.control[i] = control(Z, std::max(i, 1));
  }
  return tr;
}

Transcription transcribe(const BoundaryConditions& bc, const CostWeights& w,
                         const VehicleParams& P, int N) {
  Transcription tr;
  tr.N = N;
  tr.xi0 = bc.xi0;
  tr.x_f = bc.target.x;
  tr.h_f = bc.target.h;
  tr.gamma_f = bc.target.gamma;
  tr.w = w;
  tr.P = P;
  const double cruise = std::abs(tr.x_f - tr.xi0.x) / std::max(bc.xi0.v, 1e-3);
  tr.t_f_min = std::max(cruise / 3.0, 1e-2);
  tr.t_f_max = std::max(20.0 * cruise, 1.0);
  return tr;
}

namespace {

/// Bound-projected L-BFGS minimization of a smooth function. Gradient steps
/// are projected onto the box; the memory is dropped whenever curvature
/// information degenerates.
class ProjectedLbfgs {
 public:
  ProjectedLbfgs(int dim, int memory) : dim_(dim), memory_(memory) {}

  void reset() {
    s_.clear();
    y_.clear();
    rho_.clear();
  }

  void push(const VectorXd& s, const VectorXd& y) {
    const double sy = s.dot(y);
    if (sy <= 1e-12 * s.norm() * y.norm()) {
      return;  // curvature too weak to be useful
    }
    s_.push_back(s);
    y_.push_back(y);
    rho_.push_back(1.0 / sy);
    if (static_cast<int>(s_.size()) > memory_) {
      s_.pop_front();
      y_.pop_front();
      rho_.pop_front();
    }
  }

  VectorXd direction(const VectorXd& g) const {
    VectorXd q = -g;
    const int k = static_cast<int>(s_.size());
    if (k == 0) {
      return q;
    }
    std::vector<double> alpha(k);
    for (int i = k - 1; i >= 0; --i) {
      alpha[i] = rho_[i] * s_[i].dot(q);
      q -= alpha[i] * y_[i];
    }
    const double gamma = s_[k - 1].dot(y_[k - 1]) / y_[k - 1].squaredNorm();
    q *= gamma;
    for (int i = 0; i < k; ++i) {
      const double beta = rho_[i] * y_[i].dot(q);
      q += (alpha[i] - beta) * s_[i];
    }
    return q;
  }

 private:
  int dim_;
  int memory_;
  std::deque<VectorXd> s_, y_;
  std::deque<double> rho_;
};

}  // namespace

VectorXd solve_nlp(const Transcription& tr, const VectorXd& start, const NlpOptions& opt,
                   NlpReport* report, const VectorXd* multipliers0) {
  const int n = tr.dim();
  const int m = tr.n_constraints();

  const VectorXd xs = tr.variable_scales();
  const VectorXd cs = tr.constraint_scales();
  VectorXd lo_phys(n), hi_phys(n);
  tr.bounds(lo_phys, hi_phys);
  const VectorXd lo = lo_phys.cwiseQuotient(xs);
  const VectorXd hi = hi_phys.cwiseQuotient(xs);

  const auto project = [&](VectorXd& y) {
    y = y.cwiseMax(lo).cwiseMin(hi);
  };

  // All inner work happens on scaled variables y = Z/xs and scaled
  // constraints c_s = c/cs.
  VectorXd lambda = VectorXd::Zero(m);
  if (multipliers0 && multipliers0->size() == m) {
    lambda = multipliers0->cwiseProduct(cs);
  }
  double mu = opt.mu0;

  VectorXd c_phys(m);
  const auto eval_c_scaled = [&](const VectorXd& y, VectorXd& c_sc) {
    tr.constraints(y.cwiseProduct(xs), c_phys);
    c_sc = c_phys.cwiseQuotient(cs);
  };

  const auto eval_al = [&](const VectorXd& y, double& val, VectorXd& grad) {
    const VectorXd Z = y.cwiseProduct(xs);
    VectorXd c_sc;
    eval_c_scaled(y, c_sc);
    const VectorXd wgt = lambda + mu * c_sc;  // d(AL)/d(c_scaled)
    val = tr.objective(Z) + lambda.dot(c_sc) + 0.5 * mu * c_sc.squaredNorm();
    VectorXd g_phys;
    tr.objective_gradient(Z, g_phys);
    tr.add_constraint_gradient(Z, wgt.cwiseQuotient(cs), g_phys);
    grad = g_phys.cwiseProduct(xs);
  };

  VectorXd y = start.cwiseQuotient(xs);
  project(y);

  NlpReport rep;
  double omega = 1.0 / mu;        // inner gradient tolerance schedule
  double eta = std::pow(mu, -0.1);  // constraint progress schedule

  // L-BFGS directions are restricted to the free variables: components
  // pinned at a bound with the gradient pushing outward are masked, which
  // avoids the two-metric pitfall where projection turns a descent direction
  // into an ascent one.
  const auto active_mask = [&](const VectorXd& yv, const VectorXd& gv) {
    VectorXd mask = VectorXd::Ones(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double span = std::max(hi[i] - lo[i], 1e-12);
      const double edge = 1e-10 * span;
      if ((yv[i] <= lo[i] + edge && gv[i] > 0.0) || (yv[i] >= hi[i] - edge && gv[i] < 0.0)) {
        mask[i] = 0.0;
      }
    }
    return mask;
  };

  const auto inner_solve = [&](double gtol, long& iters) {
    ProjectedLbfgs lbfgs(n, opt.lbfgs_memory);
    double val;
    VectorXd g;
    eval_al(y, val, g);
    for (int it = 0; it < opt.inner_max; ++it) {
      const VectorXd pg = y - (y - g).cwiseMax(lo).cwiseMin(hi);
      const double pgn = pg.lpNorm<Eigen::Infinity>();
      if (pgn <= gtol) {
        return pgn;
      }
      const VectorXd mask = active_mask(y, g);
      const VectorXd g_free = g.cwiseProduct(mask);

      bool accepted = false;
      VectorXd y_new, g_new;
      double val_new = 0.0;
      for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
        VectorXd d = attempt == 0 ? VectorXd(lbfgs.direction(g_free).cwiseProduct(mask))
                                  : VectorXd(-g_free);
        if (attempt == 0 && d.dot(g_free) > -1e-12 * d.norm() * g_free.norm()) {
          continue;  // quasi-Newton direction unusable here
        }
        double alpha = 1.0;
        for (int ls = 0; ls < 50; ++ls) {
          y_new = y + alpha * d;
          project(y_new);
          const VectorXd dy = y_new - y;
          if (dy.lpNorm<Eigen::Infinity>() < 1e-18) {
            break;
          }
          VectorXd g_tmp;
          eval_al(y_new, val_new, g_tmp);
          if (std::isfinite(val_new) && val_new <= val + 1e-4 * g.dot(dy)) {
            g_new = g_tmp;
            accepted = true;
            break;
          }
          alpha *= 0.5;
        }
        if (!accepted && attempt == 0) {
          lbfgs.reset();
        }
      }
      ++iters;
      if (!accepted) {
        VectorXd pg2 = y - (y - g).cwiseMax(lo).cwiseMin(hi);
        return pg2.lpNorm<Eigen::Infinity>();
      }
      lbfgs.push(y_new - y, g_new - g);
      y = y_new;
      val = val_new;
      g = g_new;
    }
    VectorXd pg = y - (y - g).cwiseMax(lo).cwiseMin(hi);
    return pg.lpNorm<Eigen::Infinity>();
  };

  double best_viol = std::numeric_limits<double>::infinity();
  int stalled = 0;
  for (int outer = 0; outer < opt.outer_max; ++outer) {
    ++rep.outer_iterations;
    // The inner accuracy follows the classical schedule regardless of the
    // declared outer tolerance; inner_max still bounds the effort.
    const double pgn = inner_solve(std::max(omega, 1e-8), rep.inner_iterations);
    VectorXd c_sc;
    eval_c_scaled(y, c_sc);
    const double viol = c_sc.lpNorm<Eigen::Infinity>();
    rep.projected_gradient = pgn;
    rep.constraint_violation = viol;
    if (viol < 0.97 * best_viol) {
      best_viol = std::min(best_viol, viol);
      stalled = 0;
    } else if (mu >= opt.mu_max && ++stalled >= 5) {
      break;  // no feasibility progress left at the penalty ceiling
    }
    if (opt.verbose) {
      std::fprintf(stderr, "  al outer %2d: mu=%.1e viol=%.3e pg=%.3e J=%.6f\n", outer, mu,
                   viol, pgn, tr.objective(y.cwiseProduct(xs)));
    }

    if (viol <= opt.tol_constraint && pgn <= opt.tol_gradient) {
      lambda += mu * c_sc;
      rep.converged = true;
      break;
    }
    if (viol <= std::max(eta, opt.tol_constraint)) {
      lambda += mu * c_sc;
      eta = std::max(eta / std::pow(mu, 0.9), opt.tol_constraint * 0.1);
      omega = std::max(omega / mu, opt.tol_gradient * 0.1);
    } else {
      mu = std::min(mu * opt.mu_growth, opt.mu_max);
      eta = std::pow(mu, -0.1);
      omega = 1.0 / mu;
    }
  }

  const VectorXd Z = y.cwiseProduct(xs);
  rep.objective = tr.objective(Z);
  rep.final_mu = mu;
  // Multipliers back in physical row units.
  rep.multipliers = lambda.cwiseQuotient(cs);
  if (report) {
    *report = rep;
  }
  return Z;
}

VectorXd refine_solution(const Transcription& coarse, const VectorXd& Zc,
                         const Transcription& fine) {
  VectorXd Zf(fine.dim());
  const int Nc = coarse.N;
  const int Nf = fine.N;
  for (int i = 1; i <= Nf; ++i) {
    // Node positions: map fine node i to coarse fractional node.
    const double a = static_cast<double>(i) * Nc / Nf;
    const int j0 = std::clamp(static_cast<int>(std::floor(a)), 0, Nc - 1);
    const double frac = a - j0;
    const Vec5 s0 = coarse.node(Zc, j0).vec();
    const Vec5 s1 = coarse.node(Zc, j0 + 1).vec();
    Zf.segment<5>(fine.state_index(i)) = (1.0 - frac) * s0 + frac * s1;
    // Interval midpoint of fine interval i in coarse interval units.
    const double am = (static_cast<double>(i) - 0.5) * Nc / Nf;
    const int jm = std::clamp(static_cast<int>(std::floor(am)), 0, Nc - 1);
    Zf[fine.control_index(i)] = coarse.control(Zc, jm + 1);
  }
  Zf[fine.tf_index()] = Zc[coarse.tf_index()];
  return Zf;
}

VectorXd refine_multipliers(const Transcription& coarse, const VectorXd& mc,
                            const Transcription& fine) {
  VectorXd mf(fine.n_constraints());
  const int Nc = coarse.N;
  const int Nf = fine.N;
  for (int i = 1; i <= Nf; ++i) {
    // Position of this interval's midpoint in coarse midpoint coordinates.
    const double a = (i - 0.5) * Nc / Nf + 0.5;
    const int j0 = std::clamp(static_cast<int>(std::floor(a)), 1, Nc);
    const int j1 = std::min(j0 + 1, Nc);
    const double frac = std::clamp(a - j0, 0.0, 1.0);
    for (int c = 0; c < 5; ++c) {
      mf[5 * (i - 1) + c] =
          (1.0 - frac) * mc[5 * (j0 - 1) + c] + frac * mc[5 * (j1 - 1) + c];
    }
  }
  mf.segment<3>(5 * Nf) = mc.segment<3>(5 * Nc);
  return mf;
}

VectorXd solve_nlp_refined(const Transcription& tr, const NlpOptions& opt, int n0,
                           NlpReport* report) {
  std::vector<int> grids;
  for (int n = n0; n < tr.N; n *= 2) {
    grids.push_back(n);
  }
  grids.push_back(tr.N);

  Transcription stage = tr;
  stage.N = grids.front();
  const double t_guess = std::max(std::abs(tr.x_f - tr.xi0.x) / std::max(tr.xi0.v, 1.0), 10.0);
  VectorXd Z = stage.warm_start(t_guess);

  NlpOptions stage_opt = opt;
  VectorXd duals;
  for (std::size_t g = 0; g < grids.size(); ++g) {
    Transcription next = tr;
    next.N = grids[g];
    if (g > 0) {
      Z = refine_solution(stage, Z, next);
      duals = refine_multipliers(stage, duals, next);
    }
    stage = next;
    const bool last = g + 1 == grids.size();
    // Coarse stages only need to land in the right basin.
    stage_opt.tol_constraint = last ? opt.tol_constraint : std::max(opt.tol_constraint, 1e-6);
    stage_opt.tol_gradient = last ? opt.tol_gradient : std::max(opt.tol_gradient, 1e-4);
    NlpReport rep;
    Z = solve_nlp(stage, Z, stage_opt, &rep, g > 0 ? &duals : nullptr);
    duals = rep.multipliers;
    // Warm duals only make sense against a comparable penalty weight; let the
    // next stage resume near where this one ended instead of re-ramping.
    stage_opt.mu0 = std::max(opt.mu0, rep.final_mu / opt.mu_growth);
    if (last && report) {
      *report = rep;
    }
  }
  return Z;
}

}  // namespace guidance::direct
