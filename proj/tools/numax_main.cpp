#include <cmath>
#include <cstdio>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "numax/baselines.hpp"
#include "numax/dpda.hpp"
#include "numax/harness.hpp"

using namespace numax;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

int cmd_run(const std::string& config_path, int iters, const std::string& out_dir,
            unsigned long long seed, bool seed_set, bool validate_only, bool parallel) {
  harness::ExperimentConfig cfg = harness::load_config(config_path);
  if (iters > 0) cfg.iterations = iters;
  if (!out_dir.empty()) cfg.output_dir = out_dir;
  if (seed_set) cfg.seed = seed;
  if (parallel) cfg.parallel = true;

  if (validate_only) {
    const harness::BuiltExperiment be = harness::build_experiment(cfg);
    std::printf("network: %zu nodes, %zu links, %zu flows, dimension %d\n",
                be.network.nodes.size(), be.network.links.size(), be.network.flows.size(),
                be.network.dimension());
    std::printf("capacity rows: %zu, conservation rows: %zu\n", be.network.capacity_rows.size(),
                be.network.conservation_rows.size());
    std::printf("step sizes: valid (gamma %.6g)\n", be.steps.gamma);
    return kExitOk;
  }

  const harness::ExperimentSummary s = harness::run_experiment(cfg);
  std::printf("iterations:            %d\n", s.iterations);
  std::printf("final utility:         %.8f\n", s.final_utility);
  std::printf("conservation residual: %.3e\n", s.final_conservation);
  std::printf("capacity distance:     %.3e\n", s.final_capacity);
  if (!std::isnan(s.utility_gap)) {
    std::printf("reference objective:   %.8f\n", s.reference_objective);
    std::printf("utility gap:           %.3e\n", s.utility_gap);
  }
  if (!std::isnan(s.fitted_exponent))
    std::printf("fitted rate exponent:  %.3f\n", s.fitted_exponent);
  else
    std::printf("fitted rate exponent:  n/a\n");
  std::printf("trace: %s\n", s.trace_path.c_str());
  return kExitOk;
}

int cmd_certify(const std::string& config_path) {
  const harness::ExperimentConfig cfg = harness::load_config(config_path);
  const harness::BuiltExperiment be = harness::build_experiment(cfg);
  const auto violations = dpda::validate_step_sizes(be.network, be.steps);
  std::printf("step-size inequalities: %s\n", violations.empty() ? "satisfied" : "violated");
  for (const auto& v : violations)
    std::printf("  violated at %s (lhs %.6g, rhs %.6g)\n", v.where.c_str(), v.lhs, v.rhs);
  const dpda::CertificateReport rep = dpda::q_certificate(be.network, be.steps);
  std::printf("certificate dimension:  %d\n", rep.dimension);
  std::printf("min eigenvalue:         %.6e\n", rep.min_eigenvalue);
  std::printf("schur-reduced min eig:  %.6e\n", rep.schur_min_eigenvalue);
  std::printf("verdict:                %s\n", rep.psd ? "PSD" : "indefinite");
  return kExitOk;
}

int cmd_baseline(const std::string& config_path, double grid_step) {
  harness::ExperimentConfig cfg = harness::load_config(config_path);
  if (grid_step > 0) cfg.grid_step = grid_step;
  const harness::BuiltExperiment be = harness::build_experiment(cfg);

  baselines::CentralizedConfig cc;
  cc.gamma = cfg.steps.gamma;
  cc.margin = cfg.steps.margin;
  const baselines::ReferenceSolution ref =
      baselines::centralized_solve(be.network, be.utilities, cc);
  const baselines::OracleSolution oracle =
      baselines::brute_force_nonconvex(be.network, be.utilities, cfg.grid_step);
  const baselines::GapReport gap = baselines::relaxation_gap(ref, oracle);

  std::printf("centralized objective: %.8f (rounds %d, feasibility %.2e, slackness %.2e)\n",
              ref.point.objective, ref.rounds, ref.primal_feasibility,
              ref.complementary_slackness);
  std::printf("oracle objective:      %.8f (grid step %.4g, %lld cells)\n", oracle.objective,
              oracle.grid_step, oracle.cells_visited);
  std::printf("relaxation gap:        %.8f (%s)\n", gap.gap,
              gap.upper_bound_holds ? "upper bound holds" : "UPPER BOUND VIOLATED");
  std::printf("oracle rates:         ");
  for (double r : oracle.rates) std::printf(" %.4f", r);
  std::printf("\n");
  return gap.upper_bound_holds ? kExitOk : kExitRuntime;
}

int cmd_scenario(const std::string& name, const std::string& out_path) {
  if (name != "fig2") {
    std::fprintf(stderr, "unknown scenario '%s' (available: fig2)\n", name.c_str());
    return kExitValidation;
  }
  const harness::ExperimentConfig cfg = harness::builtin_fig2_scenario();
  harness::write_config(cfg, out_path);
  std::printf("wrote scenario to %s\n", out_path.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"moment-relaxed network utility maximization: distributed solver and tools"};
  app.require_subcommand(1);

  std::string config_path, out_dir, scenario_name, scenario_out = "scenario.json";
  int iters = 0;
  unsigned long long seed = 0;
  bool validate_only = false, parallel = false;
  double grid_step = 0.0;

  CLI::App* run = app.add_subcommand("run", "run the distributed solver");
  run->add_option("--config", config_path, "experiment config (json)")->required();
  run->add_option("--iters", iters, "override iteration count");
  run->add_option("--out", out_dir, "output directory");
  CLI::Option* seed_opt = run->add_option("--seed", seed, "seed for synthetic pieces");
  run->add_flag("--validate-only", validate_only, "validate and exit");
  run->add_flag("--parallel", parallel, "use the OpenMP engine");

  CLI::App* certify = app.add_subcommand("certify", "emit the step-size certificate report");
  certify->add_option("--config", config_path, "experiment config (json)")->required();

  CLI::App* baseline = app.add_subcommand("baseline", "centralized and brute-force baselines");
  baseline->add_option("--config", config_path, "experiment config (json)")->required();
  baseline->add_option("--grid-step", grid_step, "oracle grid step");

  CLI::App* scenario = app.add_subcommand("scenario", "write a built-in scenario");
  scenario->add_option("name", scenario_name, "scenario name (fig2)")->required();
  scenario->add_option("--out", scenario_out, "output path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed())
      return cmd_run(config_path, iters, out_dir, seed, seed_opt->count() > 0, validate_only,
                     parallel);
    if (certify->parsed()) return cmd_certify(config_path);
    if (baseline->parsed()) return cmd_baseline(config_path, grid_step);
    if (scenario->parsed()) return cmd_scenario(scenario_name, scenario_out);
  } catch (const harness::ValidationError& e) {
    std::fprintf(stderr, "validation error: %s\n", e.what());
    for (const auto& issue : e.issues) std::fprintf(stderr, "  - %s\n", issue.c_str());
    return kExitValidation;
  } catch (const harness::ParseError& e) {
    std::fprintf(stderr, "parse error: %s\n", e.what());
    return kExitValidation;
  } catch (const net::NetworkError& e) {
    std::fprintf(stderr, "network error: %s\n", e.what());
    return kExitValidation;
  } catch (const dpda::StepSizeInvalid& e) {
    std::fprintf(stderr, "step-size error: %s\n", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitOk;
}
