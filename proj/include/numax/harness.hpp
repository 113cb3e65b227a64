#pragma once

#include <limits>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "numax/baselines.hpp"
#include "numax/dpda.hpp"
#include "numax/moments.hpp"
#include "numax/net.hpp"

namespace numax::harness {

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ValidationError : std::runtime_error {
  std::vector<std::string> issues;
  explicit ValidationError(std::vector<std::string> list)
      : std::runtime_error(list.empty() ? "validation failed"
                                        : "validation failed: " + list.front() +
                                              (list.size() > 1 ? " (+" +
                                                                     std::to_string(list.size() - 1) +
                                                                     " more)"
                                                               : "")),
        issues(std::move(list)) {}
};

struct UtilityConfig {
  std::vector<double> coefficients;
  int order = 6;
  double rate_lower = 0.0;
  double rate_upper = 0.0;
  double moment_bound = -1.0;  // negative means "auto"
};

struct StepConfig {
  bool auto_mode = true;
  double gamma = 0.1;
  double margin = 0.9;
  // Explicit mode: arrays in flattening order.
  std::vector<double> tau_source;
  std::vector<double> tau_forward;
  std::vector<double> kappa;
  std::vector<double> d_source;
  std::vector<double> d_forward;
};

struct ExperimentConfig {
  net::NetworkSpec network;
  std::string network_file;  // when nonempty the network came from this path
  UtilityConfig default_utility;
  std::map<std::string, UtilityConfig> per_source_utility;  // keyed by source id
  StepConfig steps;
  int iterations = 1000;
  unsigned long long seed = 0;
  bool record_messages = false;
  bool parallel = false;
  bool compute_reference = true;
  bool random_init = false;  // seeded random x^0 instead of zero
  double projection_tolerance = 1e-8;
  int projection_max_cycles = 2000;
  double grid_step = 0.05;
  std::string output_dir = "out";
  bool capacities_reconstructed = false;  // scenario annotation carried to metadata
};

ExperimentConfig load_config(const std::string& path);
ExperimentConfig config_from_json_text(const std::string& text);
std::string config_to_json_text(const ExperimentConfig& cfg);
void write_config(const ExperimentConfig& cfg, const std::string& path);

/// The bundled eight-source reference scenario: routing from the published
/// next-hop table; link capacities are a documented reconstruction (the
/// original figure is not machine-readable), so quantitative claims should
/// not lean on them.
ExperimentConfig builtin_fig2_scenario();

/// Materialized experiment pieces shared by the CLI verbs.
struct BuiltExperiment {
  net::Network network;
  std::vector<moments::UtilitySpec> utilities;
  dpda::StepSizes steps;
};

BuiltExperiment build_experiment(const ExperimentConfig& cfg);

struct ExperimentSummary {
  int iterations = 0;
  double final_utility = 0.0;
  double final_conservation = 0.0;
  double final_capacity = 0.0;
  double fitted_exponent = std::numeric_limits<double>::quiet_NaN();
  double reference_objective = std::numeric_limits<double>::quiet_NaN();
  double utility_gap = std::numeric_limits<double>::quiet_NaN();
  std::string trace_path;
  std::string meta_path;
};

ExperimentSummary run_experiment(const ExperimentConfig& cfg);

struct InsufficientData : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NonPositiveResiduals : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Least-squares slope of log(residual) against log(k), dropping the first
/// burn_in fraction of rounds and any nonpositive residuals.
double fit_rate(std::span<const double> ks, std::span<const double> residuals, double burn_in);
double fit_rate(const dpda::RunTrace& trace, double burn_in);

void write_trace_csv(const std::string& path, const net::Network& net,
                     const dpda::RunTrace& trace);

struct TraceData {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  int column(const std::string& name) const;
};

TraceData read_trace_csv(const std::string& path);

}  // namespace numax::harness
