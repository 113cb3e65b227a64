#pragma once

#include <stdexcept>
#include <vector>

#include "numax/dpda.hpp"
#include "numax/moments.hpp"
#include "numax/net.hpp"

namespace numax::baselines {

struct NotConverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TooLarge : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Centralized solution of the relaxation, used as the reference the
/// distributed run is measured against.
struct ReferenceSolution {
  dpda::ReferencePoint point;  // x*, lambda*, theta*, objective
  double primal_feasibility = 0.0;
  double complementary_slackness = 0.0;
  int rounds = 0;
};

struct CentralizedConfig {
  int max_rounds = 400000;
  int chunk = 2000;
  double gamma = 0.2;
  double margin = 0.9;
  double primal_tol = 1e-6;
  double slack_tol = 1e-5;
  double objective_tol = 1e-7;  // plateau detection between chunks
  bool polish = true;
  bool parallel = false;
  geometry::DykstraConfig projection;
};

/// Solves the relaxation by running the same primal-dual iteration with
/// global state (no message passing) until the last iterate is feasible and
/// the objective plateaus, then restores exact feasibility by projection.
ReferenceSolution centralized_solve(const net::Network& net,
                                    const std::vector<moments::UtilitySpec>& utilities,
                                    const CentralizedConfig& cfg = {});

struct OracleSolution {
  std::vector<double> rates;  // per source aggregate rates
  double objective = 0.0;
  double grid_step = 0.0;
  long long cells_visited = 0;
};

/// Exhaustive grid search over per-path rates of the original non-convex
/// problem. Paths are enumerated from the routing DAG; conservation holds by
/// construction and physical link loads respect capacities.
OracleSolution brute_force_nonconvex(const net::Network& net,
                                     const std::vector<moments::UtilitySpec>& utilities,
                                     double grid_step);

struct GapReport {
  double reference_objective = 0.0;
  double oracle_objective = 0.0;
  double gap = 0.0;  // reference - oracle; the relaxation upper-bounds the max
  bool upper_bound_holds = false;
};

GapReport relaxation_gap(const ReferenceSolution& ref, const OracleSolution& oracle,
                         double tol = 1e-6);

/// Feasibility measures of a flattened point (used by tests and the polish).
double primal_feasibility(const net::Network& net,
                          const std::vector<moments::UtilitySpec>& utilities,
                          std::span<const double> x);

double objective_value(const net::Network& net,
                       const std::vector<moments::UtilitySpec>& utilities,
                       std::span<const double> x);

}  // namespace numax::baselines
