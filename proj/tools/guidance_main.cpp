#include "guidance/pipeline.hpp"
#include "guidance/scenario.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <string>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitPhase1 = 3;
constexpr int kExitPhase2 = 4;
constexpr int kExitIo = 5;

std::string join_path(const std::string& dir, const std::string& file) {
  if (dir.empty() || dir == ".") {
    return file;
  }
  return dir.back() == '/' ? dir + file : dir + "/" + file;
}

void print_summary(const guidance::pipeline::RunReport& rep) {
  std::printf("scenario: %s\n", rep.scenario_name.c_str());
  const auto show_phase = [](const char* name, const guidance::pipeline::PhaseReport& ph) {
    if (!ph.run) {
      return;
    }
    std::printf("%s: %s  reached=%.4f  steps=%d (+%d rejected)  newton=%d  %.1fs\n", name,
                ph.ok ? "ok" : "FAILED", ph.reached, ph.trace.accepted_steps(),
                ph.trace.rejected_steps(), ph.trace.total_newton_iterations(), ph.wall_seconds);
    for (const auto& [key, val] : ph.residuals) {
      std::printf("  %-28s %.3e\n", key.c_str(), val);
    }
  };
  show_phase("phase1", rep.phase1);
  show_phase("phase2", rep.phase2);
  if (rep.warm.attempted) {
    std::printf("warm start: %s, newton iterations = %d\n", rep.warm.hit ? "hit" : "miss",
                rep.warm.newton_iterations);
  }
  if (rep.ok) {
    std::printf("cost: total=%.4f  (time=%.4f altitude=%.4f control=%.4f)  without u^2 term=%.4f\n",
                rep.cost.total(), rep.cost.time_term, rep.cost.altitude_penalty,
                rep.cost.control_penalty, rep.cost.without_regularization());
  }
  if (rep.direct_run) {
    std::printf("direct oracle cost: %.4f (%.1fs)\n", rep.direct_cost, rep.direct_seconds);
  }
  if (!rep.error.empty()) {
    std::printf("error: %s\n", rep.error.c_str());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Indirect trajectory solver: two-phase continuation shooting"};
  app.require_subcommand(1);

  std::string scenario_path;
  bool phase1_only = false;
  bool direct_oracle = false;
  std::string warm_store;
  std::string trace_path;
  std::string out_dir;
  int samples = -1;

  CLI::App* solve = app.add_subcommand("solve", "solve a scenario end to end");
  solve->add_option("scenario", scenario_path, "scenario file")->required();
  solve->add_flag("--phase1-only", phase1_only, "stop after the lambda continuation");
  solve->add_flag("--direct-oracle", direct_oracle,
                  "also run the direct transcription for a cost cross-check");
  solve->add_option("--warm-start", warm_store,
                    "guess store; reuse a stored solution, or populate after a full run");
  solve->add_option("--trace", trace_path, "write the continuation trace to this file");
  solve->add_option("--samples", samples, "trajectory sample count override");
  solve->add_option("--out", out_dir, "output directory override");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  guidance::scenario::Scenario sc;
  try {
    sc = guidance::scenario::load_scenario(scenario_path);
  } catch (const guidance::scenario::IoError& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kExitIo;
  } catch (const guidance::scenario::ScenarioError& e) {
    std::fprintf(stderr, "invalid scenario: %s\n", e.what());
    return kExitValidation;
  }

  guidance::pipeline::PipelineOptions opt;
  opt.phase1_only = phase1_only;
  opt.run_direct = direct_oracle;
  opt.warm_start_store = warm_store;
  opt.samples = samples;

  guidance::pipeline::RunReport rep;
  try {
    rep = guidance::pipeline::run_pipeline(sc, opt);
  } catch (const guidance::scenario::IoError& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kExitIo;
  } catch (const guidance::scenario::ScenarioError& e) {
    std::fprintf(stderr, "invalid scenario: %s\n", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return kExitPhase1;
  }

  const std::string dir = out_dir.empty() ? sc.output.directory : out_dir;
  try {
    guidance::pipeline::write_report(rep, join_path(dir, sc.name + "_report.txt"));
    if (rep.trajectory.size() > 0) {
      guidance::pipeline::export_trajectory_csv(rep.trajectory,
                                                join_path(dir, sc.name + "_trajectory.csv"));
    }
    if (!trace_path.empty()) {
      guidance::pipeline::write_trace(rep, trace_path);
    }
  } catch (const guidance::scenario::IoError& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kExitIo;
  }

  print_summary(rep);
  if (rep.ok) {
    return kExitOk;
  }
  return rep.exit_code == 0 ? kExitPhase1 : rep.exit_code;
}
