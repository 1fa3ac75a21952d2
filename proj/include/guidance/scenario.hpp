#pragma once

#include "guidance/homotopy.hpp"
#include "guidance/shoot.hpp"
#include "guidance/types.hpp"

#include <map>
#include <stdexcept>
#include <string>

namespace guidance::scenario {

/// Scenario file is malformed or fails validation.
struct ScenarioError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Filesystem failure while reading or writing artifacts.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Nested key-value tree, the on-disk shape of scenarios and reports.
/// Sections open with "name {" and close with "}"; leaves are "key = value";
/// "#" starts a comment.
struct KvNode {
  std::map<std::string, std::string> values;
  std::map<std::string, KvNode> children;

  bool has(const std::string& key) const { return values.count(key) > 0; }
  const KvNode* child(const std::string& name) const;
};

KvNode parse_kv(const std::string& text);
KvNode load_kv(const std::string& path);
std::string serialize_kv(const KvNode& root);
void save_kv(const KvNode& root, const std::string& path);

struct SolverSettings {
  double flow_rtol = 1e-12;
  double flow_atol = 1e-13;
  double newton_tol_phase1 = 1e-10;  ///< scaled residual infinity norm
  double newton_tol_phase2 = 1e-8;
  int newton_max_iter = 40;
  bool phase2_reduced = false;  ///< 11-unknown midpoint variant
  shoot::ShootingUnknowns1 first_guess{Costate{0.5, 1.0, 1.0, 1.0, 1.0}, 6.0};
};

struct DirectSettings {
  int n_ci = 200;         ///< grid for routine runs
  int n_reference = 1000; ///< grid for cost cross-checks
};

struct OutputSettings {
  int samples = 1000;
  std::string directory = ".";
};

struct Scenario {
  std::string name = "bunt_default";
  VehicleParams vehicle;
  BoundaryConditions bc;
  homotopy::Phase1Init phase1_init;
  double k_max = 100.0;
  double k_min = 2.0;
  double u_max_init = 25.0;
  homotopy::ContinuationConfig phase1_continuation{1e-3, 1e-6, 0.05, true};
  homotopy::ContinuationConfig phase2_continuation{5e-3, 1e-6, 0.05, true};
  SolverSettings solver;
  DirectSettings direct;
  OutputSettings output;

  homotopy::Phase2Range phase2_range() const {
    return {k_max, k_min, u_max_init, vehicle.u_max};
  }
};

bool operator==(const Scenario& a, const Scenario& b);

/// Throws ScenarioError describing every violated requirement.
void validate(const Scenario& s);

Scenario scenario_from_kv(const KvNode& root);
KvNode scenario_to_kv(const Scenario& s);

Scenario load_scenario(const std::string& path);
void save_scenario(const Scenario& s, const std::string& path);

}  // namespace guidance::scenario
