#include "guidance/shoot.hpp"

#include "guidance/pmp.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

namespace guidance::shoot {

std::optional<Vec6> residual_phase1(const ShootingUnknowns1& Z, const Phase1Data& data,
                                    const CostWeights& w, const VehicleParams& P,
                                    const integrate::FlowOptions& opt) {
  Vec10 z0;
  z0 << data.xi0.vec(), Z.p0.vec();
  const auto res = integrate::flow(z0, Z.t_f, w, P, integrate::Direction::forward, opt);
  if (!res.ok) {
    return std::nullopt;
  }
  const State sf = State::from_vec(res.z_end.head<5>());
  const Costate pf = Costate::from_vec(res.z_end.tail<5>());
  const double uf = pmp::pointwise_control(sf, pf, w, P).u;

  Vec6 r;
  r[0] = sf.x - data.x_target;
  r[1] = sf.h - data.h_target;
  r[2] = sf.gamma - data.gamma_target;
  r.tail<3>() = pmp::transversality_residuals(sf, pf, uf, w, P);
  return r;
}

std::optional<Vec21> residual_phase2(const ShootingUnknowns2& Z, const BoundaryConditions& bc,
                                     const CostWeights& w, const VehicleParams& P,
                                     const integrate::FlowOptions& opt) {
  const double half = 0.5 * Z.t_f;

  Vec10 z_minus;
  z_minus << Z.xi_minus.vec(), Z.p_minus.vec();
  const auto back = integrate::flow(z_minus, half, w, P, integrate::Direction::backward, opt);
  if (!back.ok) {
    return std::nullopt;
  }

  Vec10 z_plus;
  z_plus << Z.xi_plus.vec(), Z.p_plus.vec();
  const auto fwd = integrate::flow(z_plus, half, w, P, integrate::Direction::forward, opt);
  if (!fwd.ok) {
    return std::nullopt;
  }

  const State sf = State::from_vec(fwd.z_end.head<5>());
  const Costate pf = Costate::from_vec(fwd.z_end.tail<5>());
  const double uf = pmp::pointwise_control(sf, pf, w, P).u;

  Vec21 r;
  r.segment<5>(0) = back.z_end.head<5>() - bc.xi0.vec();
  r[5] = sf.x - bc.target.x;
  r[6] = sf.h - bc.target.h;
  r[7] = sf.gamma - bc.target.gamma;
  r.segment<3>(8) = pmp::transversality_residuals(sf, pf, uf, w, P);
  r.segment<5>(11) = Z.xi_minus.vec() - Z.xi_plus.vec();
  r.segment<5>(16) = Z.p_minus.vec() - Z.p_plus.vec();
  return r;
}

std::optional<Vec11> residual_phase2_reduced(const Vec11& Z, const BoundaryConditions& bc,
                                             const CostWeights& w, const VehicleParams& P,
                                             const integrate::FlowOptions& opt) {
  ShootingUnknowns2 full;
  full.xi_minus = full.xi_plus = State::from_vec(Z.segment<5>(0));
  full.p_minus = full.p_plus = Costate::from_vec(Z.segment<5>(5));
  full.t_f = Z[10];
  const auto r21 = residual_phase2(full, bc, w, P, opt);
  if (!r21) {
    return std::nullopt;
  }
  Vec11 r;
  r << r21->head<11>();
  return r;
}

const char* newton_failure_name(NewtonFailure f) {
  switch (f) {
    case NewtonFailure::none: return "none";
    case NewtonFailure::residual_eval: return "residual_eval";
    case NewtonFailure::max_iter: return "max_iter";
    case NewtonFailure::line_search: return "line_search";
    case NewtonFailure::singular_jacobian: return "singular_jacobian";
  }
  return "unknown";
}

namespace {

struct VariableMap {
  VectorXd x_scale;
  std::vector<std::uint8_t> log_vars;

  VectorXd to_internal(const VectorXd& z) const {
    VectorXd y(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      y[i] = is_log(i) ? std::log(z[i]) : z[i] / x_scale[i];
    }
    return y;
  }
  VectorXd to_raw(const VectorXd& y) const {
    VectorXd z(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      z[i] = is_log(i) ? std::exp(y[i]) : y[i] * x_scale[i];
    }
    return z;
  }
  bool is_log(Eigen::Index i) const {
    return i < static_cast<Eigen::Index>(log_vars.size()) && log_vars[i] != 0;
  }
};

void run_columns(int n, int threads, const std::function<void(int)>& work) {
  const int hw = static_cast<int>(std::thread::hardware_concurrency());
  const int want = threads > 0 ? threads : std::max(hw, 1);
  const int used = std::min(want, n);
  if (used <= 1) {
    for (int j = 0; j < n; ++j) work(j);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(used);
  std::atomic<int> next{0};
  for (int t = 0; t < used; ++t) {
    pool.emplace_back([&] {
      for (int j = next.fetch_add(1); j < n; j = next.fetch_add(1)) work(j);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace

std::pair<VectorXd, NewtonReport> newton_solve(const ResidualFn& residual, const VectorXd& z0,
                                               const NewtonOptions& opt) {
  NewtonReport rep;
  const Eigen::Index n = z0.size();

  VariableMap map;
  map.x_scale = opt.x_scale.size() == n ? opt.x_scale : VectorXd::Ones(n);
  map.log_vars = opt.log_vars;

  const auto eval_scaled = [&](const VectorXd& y) -> std::optional<VectorXd> {
    auto r = residual(map.to_raw(y));
    if (!r) {
      return std::nullopt;
    }
    if (opt.r_scale.size() == r->size()) {
      *r = r->cwiseQuotient(opt.r_scale);
    }
    if (!r->allFinite()) {
      return std::nullopt;
    }
    return r;
  };

  VectorXd y = map.to_internal(z0);
  auto r_opt = eval_scaled(y);
  if (!r_opt) {
    rep.failure = NewtonFailure::residual_eval;
    return {z0, rep};
  }
  VectorXd r = *r_opt;
  const Eigen::Index m = r.size();
  double rnorm = r.lpNorm<Eigen::Infinity>();
  rep.residual_history.push_back(rnorm);

  // Forward-difference Jacobian; each column is an independent residual
  // evaluation (flow), so columns run in parallel.
  const auto jacobian = [&](const VectorXd& y0, const VectorXd& r0,
                            MatrixXd& J) -> bool {
    J.resize(m, n);
    std::atomic<bool> ok{true};
    run_columns(static_cast<int>(n), opt.threads, [&](int j) {
      double step = std::max(opt.fd_rel * std::abs(y0[j]), opt.fd_abs);
      volatile double bumped = y0[j] + step;
      step = bumped - y0[j];  // actualized step keeps linear rows exact
      VectorXd yj = y0;
      yj[j] = bumped;
      const auto rj = eval_scaled(yj);
      if (!rj) {
        ok = false;
        return;
      }
      J.col(j) = (*rj - r0) / step;
    });
    return ok;
  };

  const auto newton_direction = [&](const VectorXd& y0, const VectorXd& r0, VectorXd& dy,
                                    double& shrink) -> bool {
    MatrixXd J;
    if (!jacobian(y0, r0, J)) {
      rep.failure = NewtonFailure::residual_eval;
      return false;
    }
    Eigen::ColPivHouseholderQR<MatrixXd> qr(J);
    const auto& R = qr.matrixR();
    const double r00 = std::abs(R(0, 0));
    const double rnn = std::abs(R(n - 1, n - 1));
    if (!(rnn > 0.0) || r00 / rnn > opt.cond_limit) {
      rep.failure = NewtonFailure::singular_jacobian;
      return false;
    }
    dy = qr.solve(-r0);
    shrink = 1.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double cap = map.is_log(i) ? 1.0 : opt.max_step;
      if (std::abs(dy[i]) > cap) {
        shrink = std::min(shrink, cap / std::abs(dy[i]));
      }
    }
    dy *= shrink;
    return true;
  };

  // Main damped iteration.
  while (rnorm > opt.tol) {
    if (rep.iterations >= opt.max_iter) {
      rep.failure = NewtonFailure::max_iter;
      rep.final_residual_norm = rnorm;
      return {map.to_raw(y), rep};
    }
    VectorXd dy;
    double shrink = 1.0;
    if (!newton_direction(y, r, dy, shrink)) {
      rep.final_residual_norm = rnorm;
      return {map.to_raw(y), rep};
    }

    const double phi0 = 0.5 * r.squaredNorm();
    double alpha = 1.0;
    bool accepted = false;
    for (int ls = 0; ls <= opt.max_backtracks; ++ls) {
      const VectorXd y_try = y + alpha * dy;
      const auto r_try = eval_scaled(y_try);
      if (r_try) {
        const double phi = 0.5 * r_try->squaredNorm();
        // grad(phi) . dy = -2 shrink phi0 for the (possibly capped) direction
        if (phi <= phi0 * (1.0 - 2.0 * opt.armijo_c * alpha * shrink)) {
          y = y_try;
          r = *r_try;
          accepted = true;
          break;
        }
      }
      alpha *= opt.backtrack;
    }
    if (!accepted) {
      rep.failure = NewtonFailure::line_search;
      rep.final_residual_norm = rnorm;
      return {map.to_raw(y), rep};
    }
    rnorm = r.lpNorm<Eigen::Infinity>();
    rep.residual_history.push_back(rnorm);
    rep.step_history.push_back(alpha);
    ++rep.iterations;
  }
  rep.converged = true;

  // Polish: a few undamped steps, kept only while they reduce the residual.
  // Near the solution they converge quadratically and zero the exactly
  // linear rows to roundoff.
  for (int i = 0; i < opt.polish_iters; ++i) {
    VectorXd dy;
    double shrink = 1.0;
    NewtonReport scratch = rep;
    if (!newton_direction(y, r, dy, shrink)) {
      rep = scratch;  // polish failures do not demote a converged solve
      break;
    }
    const VectorXd y_try = y + dy;
    const auto r_try = eval_scaled(y_try);
    if (!r_try) {
      break;
    }
    const double rnorm_try = r_try->lpNorm<Eigen::Infinity>();
    if (rnorm_try >= rnorm) {
      break;
    }
    y = y_try;
    r = *r_try;
    rnorm = rnorm_try;
    rep.residual_history.push_back(rnorm);
    rep.step_history.push_back(1.0);
    ++rep.iterations;
  }

  rep.failure = NewtonFailure::none;
  rep.final_residual_norm = rnorm;
  return {map.to_raw(y), rep};
}

}  // namespace guidance::shoot
