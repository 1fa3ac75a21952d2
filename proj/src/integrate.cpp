#include "guidance/integrate.hpp"

#include "guidance/pmp.hpp"

#include <algorithm>
#include <cmath>

namespace guidance::integrate {

namespace {

// Dormand-Prince 5(4) tableau. The extremal field is autonomous, so the
// stage abscissae are never needed.
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                 b6 = 11.0 / 84;
// 5th-order minus embedded 4th-order weights (error estimator).
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                 e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

bool state_valid(const Vec10& z) {
  return z.allFinite() && z[2] > 0.0 && z[4] > 0.0;
}

}  // namespace

const char* failure_reason_name(FailureReason r) {
  switch (r) {
    case FailureReason::none: return "none";
    case FailureReason::step_underflow: return "step_underflow";
    case FailureReason::nonfinite: return "nonfinite";
    case FailureReason::invalid_state: return "invalid_state";
    case FailureReason::max_steps: return "max_steps";
  }
  return "unknown";
}

FlowResult flow(const Vec10& z0, double t_f, const CostWeights& w, const VehicleParams& P,
                Direction dir, const FlowOptions& opt) {
  FlowResult out;
  const double sign = dir == Direction::forward ? 1.0 : -1.0;

  // Physical time of normalized position s in [0,1].
  const auto phys_time = [&](double s) {
    return dir == Direction::forward ? s * t_f : (1.0 - s) * t_f;
  };

  if (!(t_f > 0.0) || !state_valid(z0)) {
    out.reason = FailureReason::invalid_state;
    out.t_fail = phys_time(0.0);
    return out;
  }

  const auto rhs = [&](const Vec10& z, Vec10& dz) -> bool {
    dz = sign * t_f * pmp::extremal_rhs(z, w, P);
    return dz.allFinite();
  };

  const int n_samples = std::max(opt.samples, 0);
  MatrixXd zs;
  if (n_samples > 0) {
    zs.resize(10, n_samples + 1);
    zs.col(0) = z0;
  }
  int next_sample = 1;

  Vec10 z = z0;
  Vec10 k1, k2, k3, k4, k5, k6, k7;
  if (!rhs(z, k1)) {
    out.reason = FailureReason::nonfinite;
    out.t_fail = phys_time(0.0);
    return out;
  }

  double s = 0.0;
  double h = std::clamp(opt.initial_step, opt.min_step, 1.0);
  long steps = 0;

  while (s < 1.0) {
    if (++steps > opt.max_steps) {
      out.reason = FailureReason::max_steps;
      out.t_fail = phys_time(s);
      return out;
    }
    // Clamp the step to the next sample point and to the span end.
    double s_stop = 1.0;
    if (n_samples > 0 && next_sample <= n_samples) {
      s_stop = static_cast<double>(next_sample) / n_samples;
    }
    if (s_stop - s <= 1e-14) {
      // Sub-roundoff remainder: snap instead of integrating it.
      s = s_stop;
      if (n_samples > 0 && next_sample <= n_samples &&
          s >= static_cast<double>(next_sample) / n_samples - 1e-15) {
        zs.col(next_sample) = z;
        ++next_sample;
      }
      continue;
    }
    h = std::min(h, s_stop - s);

    Vec10 y;
    bool stage_ok = true;
    y = z + h * (a21 * k1);
    stage_ok = stage_ok && rhs(y, k2);
    y = z + h * (a31 * k1 + a32 * k2);
    stage_ok = stage_ok && rhs(y, k3);
    y = z + h * (a41 * k1 + a42 * k2 + a43 * k3);
    stage_ok = stage_ok && rhs(y, k4);
    y = z + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    stage_ok = stage_ok && rhs(y, k5);
    y = z + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    stage_ok = stage_ok && rhs(y, k6);

    Vec10 z_new;
    double err = 0.0;
    if (stage_ok) {
      z_new = z + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
      stage_ok = rhs(z_new, k7) && z_new.allFinite();
      if (stage_ok) {
        const Vec10 e =
            h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
        double acc = 0.0;
        for (int i = 0; i < 10; ++i) {
          const double sc =
              opt.atol + opt.rtol * std::max(std::abs(z[i]), std::abs(z_new[i]));
          const double q = e[i] / sc;
          acc += q * q;
        }
        err = std::sqrt(acc / 10.0);
      }
    }

    if (stage_ok && err <= 1.0) {
      if (!state_valid(z_new)) {
        out.reason = z_new.allFinite() ? FailureReason::invalid_state : FailureReason::nonfinite;
        out.t_fail = phys_time(s + h);
        return out;
      }
      s += h;
      z = z_new;
      k1 = k7;  // FSAL
      if (n_samples > 0 && next_sample <= n_samples &&
          s >= static_cast<double>(next_sample) / n_samples - 1e-15) {
        zs.col(next_sample) = z;
        ++next_sample;
      }
      const double grow = err == 0.0 ? 5.0 : std::min(5.0, 0.9 * std::pow(err, -0.2));
      h = std::min(std::max(h * grow, opt.min_step), 1.0);
    } else {
      // k1 still matches z: rejected steps leave the state untouched.
      if (!stage_ok) {
        h *= 0.25;
      } else {
        h *= std::max(0.2, 0.9 * std::pow(err, -0.2));
      }
      if (h < opt.min_step) {
        out.reason = stage_ok ? FailureReason::step_underflow : FailureReason::nonfinite;
        out.t_fail = phys_time(s);
        return out;
      }
    }
  }

  out.ok = true;
  out.z_end = z;

  if (n_samples > 0) {
    // Fill any samples landed on by the final step and assemble the
    // trajectory in ascending physical time.
    while (next_sample <= n_samples) {
      zs.col(next_sample) = z;
      ++next_sample;
    }
    Trajectory& tr = out.trajectory;
    tr.t.resize(n_samples + 1);
    tr.states.resize(5, n_samples + 1);
    tr.costates.resize(5, n_samples + 1);
    tr.control.resize(n_samples + 1);
    tr.hamiltonian.resize(n_samples + 1);
    for (int i = 0; i <= n_samples; ++i) {
      const int src = dir == Direction::forward ? i : n_samples - i;
      const Vec10 zi = zs.col(src);
      const State si = State::from_vec(zi.head<5>());
      const Costate pi = Costate::from_vec(zi.tail<5>());
      const double ui = pmp::pointwise_control(si, pi, w, P).u;
      tr.t[i] = t_f * static_cast<double>(i) / n_samples;
      tr.states.col(i) = zi.head<5>();
      tr.costates.col(i) = zi.tail<5>();
      tr.control[i] = ui;
      tr.hamiltonian[i] = pmp::hamiltonian(si, pi, ui, w, P);
    }
  }
  return out;
}

}  // namespace guidance::integrate
