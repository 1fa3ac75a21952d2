#include "guidance/pipeline.hpp"

#include "guidance/integrate.hpp"
#include "guidance/pmp.hpp"

#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <string>

using namespace guidance;

namespace {
const VehicleParams P{};

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("/tmp/guidance_test_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

Trajectory sample_trajectory(int samples) {
  CostWeights w;
  w.k = 100.0;
  w.u_max = 25.0;
  w.h_c = 250.0;
  w.lambda = 0.5;
  Vec10 z0;
  z0 << 0.0, 400.0, 220.0, 0.1, 600.0, 0.01, 0.05, 0.2, 0.5, 0.05;
  integrate::FlowOptions opt;
  opt.samples = samples;
  const auto res = integrate::flow(z0, 6.0, w, P, integrate::Direction::forward, opt);
  REQUIRE(res.ok);
  return res.trajectory;
}
}  // namespace

TEST_CASE("trajectory export: exact header and one row per sample point") {
  const Trajectory tr = sample_trajectory(50);
  TempFile f("traj.csv");
  pipeline::export_trajectory_csv(tr, f.path);

  std::ifstream in(f.path);
  std::string header;
  REQUIRE(std::getline(in, header));
  CHECK(header == "t,x,h,v,gamma,m,p_x,p_h,p_v,p_gamma,p_m,u,H");
  int rows = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) ++rows;
  }
  CHECK(rows == 51);  // requested sample density + 1
}

TEST_CASE("trajectory round-trips through the file bit-exactly") {
  const Trajectory tr = sample_trajectory(32);
  TempFile f("traj_rt.csv");
  pipeline::export_trajectory_csv(tr, f.path);
  const Trajectory back = pipeline::import_trajectory_csv(f.path);
  REQUIRE(back.size() == tr.size());
  CHECK((back.t - tr.t).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((back.states - tr.states).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((back.costates - tr.costates).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((back.control - tr.control).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((back.hamiltonian - tr.hamiltonian).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("reloaded rows reproduce the stored Hamiltonian column") {
  CostWeights w;
  w.k = 100.0;
  w.u_max = 25.0;
  w.h_c = 250.0;
  w.lambda = 0.5;
  const Trajectory tr = sample_trajectory(32);
  TempFile f("traj_h.csv");
  pipeline::export_trajectory_csv(tr, f.path);
  const Trajectory back = pipeline::import_trajectory_csv(f.path);
  for (Eigen::Index i = 0; i < back.size(); ++i) {
    const double H = pmp::hamiltonian(back.state_at(i), back.costate_at(i), back.control[i], w, P);
    CHECK(std::abs(H - back.hamiltonian[i]) <= 1e-8 * (1.0 + std::abs(H)));
  }
}

TEST_CASE("exports are deterministic") {
  const Trajectory a = sample_trajectory(40);
  const Trajectory b = sample_trajectory(40);
  TempFile fa("det_a.csv"), fb("det_b.csv");
  pipeline::export_trajectory_csv(a, fa.path);
  pipeline::export_trajectory_csv(b, fb.path);
  std::ifstream ia(fa.path), ib(fb.path);
  const std::string sa((std::istreambuf_iterator<char>(ia)), std::istreambuf_iterator<char>());
  const std::string sb((std::istreambuf_iterator<char>(ib)), std::istreambuf_iterator<char>());
  CHECK(sa == sb);
  CHECK_FALSE(sa.empty());
}

TEST_CASE("trapezoidal cost decomposition on a closed-form trajectory") {
  // h = 2 h_c and u = 1 everywhere: altitude term k1 * 1, control term k.
  Trajectory tr;
  const int n = 101;
  const double T = 10.0;
  tr.t.setLinSpaced(n, 0.0, T);
  tr.states.setZero(5, n);
  tr.states.row(1).setConstant(500.0);
  tr.costates.setZero(5, n);
  tr.control.setConstant(n, 1.0);
  tr.hamiltonian.setZero(n);

  CostWeights w;
  w.k0 = 1.0;
  w.k1 = 1.0;
  w.k = 2.0;
  w.h_c = 250.0;
  const auto c = pipeline::trajectory_cost(tr, w);
  CHECK(c.time_term == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(c.altitude_penalty == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(c.control_penalty == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(c.total() == doctest::Approx(40.0).epsilon(1e-12));
  CHECK(c.without_regularization() == doctest::Approx(20.0).epsilon(1e-12));
}

TEST_CASE("guess store: insert, save, load, nearest lookup") {
  scenario::Scenario near_sc;  // default bunt data
  scenario::Scenario far_sc = near_sc;
  far_sc.bc.target.x = 40000.0;

  shoot::ShootingUnknowns2 z_near;
  z_near.xi_minus = z_near.xi_plus = State{12000.0, 250.0, 260.0, 0.0, 560.0};
  z_near.p_minus = z_near.p_plus = Costate{0.004, 0.01, 0.1, 1.0, 0.05};
  z_near.t_f = 90.0;
  shoot::ShootingUnknowns2 z_far = z_near;
  z_far.t_f = 140.0;

  pipeline::GuessStore store;
  store.insert(near_sc, z_near);
  store.insert(far_sc, z_far);
  CHECK(store.size() == 2);

  // Same boundary data replaces rather than duplicates.
  store.insert(near_sc, z_near);
  CHECK(store.size() == 2);

  TempFile f("store.json");
  store.save(f.path);
  const auto loaded = pipeline::GuessStore::load_or_empty(f.path);
  REQUIRE(loaded.size() == 2);

  scenario::Scenario query = near_sc;
  query.bc.target.x += 10.0;  // close to near_sc, far from far_sc
  const auto hit = loaded.lookup(query);
  REQUIRE(hit.has_value());
  CHECK(hit->t_f == doctest::Approx(90.0));

  CHECK(pipeline::GuessStore::load_or_empty("/nonexistent/store.json").size() == 0);
}

TEST_CASE("report serializes to a parsable kv tree with the residual keys") {
  pipeline::RunReport rep;
  rep.scenario_name = "bunt_default";
  rep.ok = true;
  rep.phase1.run = rep.phase1.ok = true;
  rep.phase1.reached = 1.0;
  rep.phase1.residuals = {{"abs_x_tf_minus_xf", 1e-12}, {"H_tf", 2e-13}};
  rep.phase1.trace.attempts = {{0.5, 0.1, true, 3, 1e-11}, {0.7, 0.2, false, 15, 2.0}};
  rep.phase2.run = true;
  rep.cost.time_term = 97.0;
  rep.cost.altitude_penalty = 133.0;
  rep.cost.control_penalty = 139.0;

  const auto kv = pipeline::report_to_kv(rep);
  const auto text = scenario::serialize_kv(kv);
  const auto back = scenario::parse_kv(text);
  REQUIRE(back.child("phase1"));
  REQUIRE(back.child("phase1")->child("residuals"));
  CHECK(back.child("phase1")->child("residuals")->has("abs_x_tf_minus_xf"));
  CHECK(back.child("phase1")->values.at("accepted_steps") == "1");
  CHECK(back.child("phase1")->values.at("rejected_steps") == "1");
  CHECK(back.child("cost")->values.at("total_without_regularization") == "230");
  // wall-clock numbers live only under the timing node
  CHECK(back.child("timing"));
  CHECK_FALSE(back.child("phase1")->has("wall_seconds"));
}

TEST_CASE("trace file carries one record per attempt") {
  pipeline::RunReport rep;
  rep.phase1.trace.attempts = {{0.1, 0.1, true, 2, 1e-11}, {0.3, 0.2, false, 15, 3.0}};
  rep.phase2.trace.attempts = {{0.5, 0.1, true, 4, 1e-9}};
  TempFile f("trace.csv");
  pipeline::write_trace(rep, f.path);
  std::ifstream in(f.path);
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line == "phase,param,delta,accepted,newton_iterations,residual_norm");
  int rows = 0;
  while (std::getline(in, line)) {
    if (!line.empty()) ++rows;
  }
  CHECK(rows == 3);
}

TEST_CASE("scales reflect the scenario targets") {
  scenario::Scenario sc;
  const auto s = pipeline::scales_of(sc);
  CHECK(s.x == 25000.0);
  CHECK(s.h == 250.0);
  CHECK(s.v == 300.0);
  CHECK(s.m == 600.0);
}
