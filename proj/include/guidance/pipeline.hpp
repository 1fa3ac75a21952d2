#pragma once

#include "guidance/homotopy.hpp"
#include "guidance/scenario.hpp"
#include "guidance/shoot.hpp"
#include "guidance/types.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace guidance::pipeline {

struct PhaseReport {
  bool run = false;
  bool ok = false;
  double reached = 0.0;  ///< continuation parameter reached
  homotopy::ContinuationTrace trace;
  /// Terminal residuals in scaled units; keys mirror the accuracy tables.
  std::map<std::string, double> residuals;
  double wall_seconds = 0.0;
};

struct WarmStartReport {
  bool attempted = false;
  bool hit = false;  ///< a stored guess was found and used
  int newton_iterations = 0;
  double residual_norm = 0.0;
};

struct RunReport {
  std::string scenario_name;
  bool ok = false;
  int exit_code = 0;  ///< 0 ok, 3 phase-1 failure, 4 phase-2 failure
  std::string error;  ///< names the failed phase and the stall parameter

  PhaseReport phase1, phase2;
  WarmStartReport warm;
  /// Residual norm of the phase-2 function at theta = 0 evaluated on the
  /// midpoint data extracted from phase 1 (consistency of both formulations).
  double theta0_residual_norm = std::numeric_limits<double>::quiet_NaN();

  shoot::ShootingUnknowns1 z1;  ///< phase-1 solution at lambda = 1
  shoot::ShootingUnknowns2 z2;  ///< phase-2 solution at theta = 1
  bool have_z1 = false, have_z2 = false;

  CostDecomposition cost;  ///< of the final converged solution
  double direct_cost = std::numeric_limits<double>::quiet_NaN();
  double direct_seconds = 0.0;
  bool direct_run = false;

  Trajectory trajectory;  ///< densely sampled final solution
  double total_seconds = 0.0;
};

struct PipelineOptions {
  bool phase1_only = false;
  bool run_direct = false;
  std::string warm_start_store;  ///< path to a guess store; empty disables
  int samples = -1;              ///< override scenario output.samples when > 0
};

/// Characteristic magnitudes dividing residual rows and unknowns; the
/// "scaled units" of every reported residual.
struct ProblemScales {
  double x = 1.0, h = 1.0, v = 1.0, m = 1.0;

  Vec5 state() const {
    Vec5 s;
    s << x, h, v, 1.0, m;
    return s;
  }
};
ProblemScales scales_of(const scenario::Scenario& sc);

/// Runs the two-phase strategy: solve the easy problem at lambda = 0, deform
/// the dynamics and boundary data to lambda = 1, then lower (k, u_max) to
/// their nominal values with the midpoint shooting formulation. Failures are
/// reported, never thrown; I/O problems throw scenario::IoError.
RunReport run_pipeline(const scenario::Scenario& sc, const PipelineOptions& opt = {});

/// Columnar trajectory export;
/// header: t,x,h,v,gamma,m,p_x,p_h,p_v,p_gamma,p_m,u,H
void export_trajectory_csv(const Trajectory& tr, const std::string& path);
Trajectory import_trajectory_csv(const std::string& path);

/// Key-value report. Wall-clock values live under "timing" nodes only.
scenario::KvNode report_to_kv(const RunReport& rep);
void write_report(const RunReport& rep, const std::string& path);

/// One CSV record per continuation attempt across both phases.
void write_trace(const RunReport& rep, const std::string& path);

/// Cost decomposition of a sampled trajectory by trapezoidal quadrature.
CostDecomposition trajectory_cost(const Trajectory& tr, const CostWeights& w);

/// Offline map of converged solutions keyed by quantized boundary data.
/// Nearest stored neighbour provides the warm-start guess.
class GuessStore {
 public:
  static GuessStore load_or_empty(const std::string& path);
  void save(const std::string& path) const;

  void insert(const scenario::Scenario& sc, const shoot::ShootingUnknowns2& z);
  std::optional<shoot::ShootingUnknowns2> lookup(const scenario::Scenario& sc) const;
  std::size_t size() const { return entries_.size(); }

 private:
  struct Entry {
    VectorXd key;
    Vec21 z;
  };
  static VectorXd key_of(const scenario::Scenario& sc);
  static VectorXd key_scales(const scenario::Scenario& sc);
  std::vector<Entry> entries_;
};

}  // namespace guidance::pipeline
