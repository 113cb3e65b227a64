#include "numax/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "numax/geometry.hpp"

namespace numax::baselines {

double objective_value(const net::Network& net,
                       const std::vector<moments::UtilitySpec>& utilities,
                       std::span<const double> x) {
  double acc = 0.0;
  for (size_t sp = 0; sp < net.sources.size(); ++sp)
    for (int j = 0; j <= net.moment_order; ++j)
      acc += utilities[sp].coefficients[j] * x[net.moment_var(static_cast<int>(sp), j)];
  return acc;
}

double primal_feasibility(const net::Network& net,
                          const std::vector<moments::UtilitySpec>& utilities,
                          std::span<const double> x) {
  double vio = 0.0;
  for (const auto& crow : net.conservation_rows) {
    double v = 0.0;
    for (int idx : crow.out_vars) v += x[idx];
    for (int idx : crow.in_vars) v -= x[idx];
    vio = std::max(vio, std::fabs(v));
  }
  for (const auto& arow : net.capacity_rows) {
    double load = 0.0;
    for (int idx : arow.out_vars) load += x[idx];
    for (int idx : arow.in_vars) load += x[idx];
    vio = std::max(vio, load - arow.capacity);
  }
  for (int v = net.forward_var_base; v < net.dimension(); ++v) vio = std::max(vio, -x[v]);
  for (size_t sp = 0; sp < net.sources.size(); ++sp) {
    geometry::SourcePoint p;
    const auto& ls = net.source_links[sp];
    p.x.resize(ls.size());
    std::vector<double> caps(ls.size());
    for (size_t l = 0; l < ls.size(); ++l) {
      p.x[l] = x[net.source_var(static_cast<int>(sp), static_cast<int>(l))];
      caps[l] = net.links[ls[l]].capacity;
    }
    p.m.m.resize(net.moment_order + 1);
    for (int j = 0; j <= net.moment_order; ++j)
      p.m.m[j] = x[net.moment_var(static_cast<int>(sp), j)];
    p.r = x[net.aggregate_var(static_cast<int>(sp))];
    vio = std::max(vio, geometry::source_set_violation(p, utilities[sp], caps));
  }
  return vio;
}

namespace {

// Exact projection onto the affine subspace {Bx = 0} via the pseudo-inverse
// of B B^T (desk scale, dense).
struct ConservationProjector {
  Matrix bt;           // B^T
  Matrix pinv;         // (B B^T)^+
  const net::Network* net = nullptr;

  explicit ConservationProjector(const net::Network& n) : net(&n) {
    const Matrix b = incidence_matrix(n);
    bt = transpose(b);
    const Matrix bbt = multiply(b, bt);
    const geometry::EigResult eig = geometry::eig_sym(bbt);
    const int m = bbt.rows;
    pinv = Matrix(m, m);
    for (int k = 0; k < m; ++k) {
      if (eig.values[k] <= 1e-12) continue;
      const double inv = 1.0 / eig.values[k];
      for (int r = 0; r < m; ++r)
        for (int c = 0; c < m; ++c) pinv(r, c) += inv * eig.vectors(r, k) * eig.vectors(c, k);
    }
  }

  void project(std::vector<double>& x) const {
    std::vector<double> bx(net->conservation_rows.size(), 0.0);
    for (size_t r = 0; r < net->conservation_rows.size(); ++r) {
      for (int idx : net->conservation_rows[r].out_vars) bx[r] += x[idx];
      for (int idx : net->conservation_rows[r].in_vars) bx[r] -= x[idx];
    }
    const std::vector<double> y = matvec(pinv, bx);
    for (size_t r = 0; r < net->conservation_rows.size(); ++r) {
      for (int idx : net->conservation_rows[r].out_vars) x[idx] -= y[r];
      for (int idx : net->conservation_rows[r].in_vars) x[idx] += y[r];
    }
  }
};

// Dykstra repair of an almost-feasible point: conservation subspace, capacity
// halfspaces, forwarding nonnegativity and the per-source local sets.
std::vector<double> polish_feasible(const net::Network& net,
                                    const std::vector<moments::UtilitySpec>& utilities,
                                    std::vector<double> x, int cycles, double tol) {
  const ConservationProjector cons(net);
  const int n = net.dimension();
  const int n_sets = 3 + static_cast<int>(net.sources.size());
  std::vector<std::vector<double>> corr(n_sets, std::vector<double>(n, 0.0));
  std::vector<geometry::SourceProjectionWork> works(net.sources.size());
  geometry::DykstraConfig scfg;
  scfg.tolerance = tol * 0.1;

  std::vector<double> w(n);
  for (int cycle = 0; cycle < cycles; ++cycle) {
    int set = 0;
    const auto enter = [&](int s) {
      for (int i = 0; i < n; ++i) w[i] = x[i] + corr[s][i];
      x = w;
    };
    const auto leave = [&](int s) {
      for (int i = 0; i < n; ++i) corr[s][i] = w[i] - x[i];
    };

    enter(set);
    cons.project(x);
    leave(set);
    ++set;

    enter(set);
    for (const auto& arow : net.capacity_rows) {
      double load = 0.0;
      int nnz = static_cast<int>(arow.out_vars.size() + arow.in_vars.size());
      if (nnz == 0) continue;
      for (int idx : arow.out_vars) load += x[idx];
      for (int idx : arow.in_vars) load += x[idx];
      const double excess = load - arow.capacity;
      if (excess > 0.0) {
        const double shift = excess / nnz;
        for (int idx : arow.out_vars) x[idx] -= shift;
        for (int idx : arow.in_vars) x[idx] -= shift;
      }
    }
    leave(set);
    ++set;

    enter(set);
    for (int v = net.forward_var_base; v < n; ++v) x[v] = std::max(0.0, x[v]);
    leave(set);
    ++set;

    for (size_t sp = 0; sp < net.sources.size(); ++sp, ++set) {
      enter(set);
      geometry::SourcePoint p;
      const auto& ls = net.source_links[sp];
      p.x.resize(ls.size());
      std::vector<double> caps(ls.size());
      for (size_t l = 0; l < ls.size(); ++l) {
        p.x[l] = x[net.source_var(static_cast<int>(sp), static_cast<int>(l))];
        caps[l] = net.links[ls[l]].capacity;
      }
      p.m.m.resize(net.moment_order + 1);
      for (int j = 0; j <= net.moment_order; ++j)
        p.m.m[j] = x[net.moment_var(static_cast<int>(sp), j)];
      p.r = x[net.aggregate_var(static_cast<int>(sp))];
      const auto rep = geometry::project_source_set(p, utilities[sp], caps, scfg, works[sp]);
      for (size_t l = 0; l < ls.size(); ++l)
        x[net.source_var(static_cast<int>(sp), static_cast<int>(l))] = rep.result.x[l];
      for (int j = 0; j <= net.moment_order; ++j)
        x[net.moment_var(static_cast<int>(sp), j)] = rep.result.m.m[j];
      x[net.aggregate_var(static_cast<int>(sp))] = rep.result.r;
      leave(set);
    }

    if (primal_feasibility(net, utilities, x) <= tol) break;
  }
  return x;
}

}  // namespace

ReferenceSolution centralized_solve(const net::Network& net,
                                    const std::vector<moments::UtilitySpec>& utilities,
                                    const CentralizedConfig& cfg) {
  if (net.dimension() > 2000)
    throw TooLarge("centralized solve is limited to desk-scale instances");

  const dpda::StepSizes ss = dpda::auto_step_sizes(net, cfg.gamma, cfg.margin);

  dpda::RunConfig rc;
  rc.iterations = cfg.chunk;
  rc.parallel = cfg.parallel;
  rc.projection = cfg.projection;

  ReferenceSolution out;
  dpda::InitState init;
  double prev_obj = std::numeric_limits<double>::quiet_NaN();
  int rounds = 0;
  bool converged = false;
  dpda::RunResult rr;

  while (rounds < cfg.max_rounds) {
    rr = dpda::run(net, utilities, ss, rc, init);
    rounds += rc.iterations;
    init.snapshot = {rr.sources, rr.forwarders};

    const double feas = primal_feasibility(net, utilities, rr.final_x);
    const double obj = objective_value(net, utilities, rr.final_x);
    double cs = 0.0;
    for (size_t r = 0; r < net.capacity_rows.size(); ++r) {
      double load = 0.0;
      for (int idx : net.capacity_rows[r].out_vars) load += rr.final_x[idx];
      for (int idx : net.capacity_rows[r].in_vars) load += rr.final_x[idx];
      cs = std::max(cs, std::fabs(rr.final_lambda[r] * (net.capacity_rows[r].capacity - load)));
    }
    const bool plateau =
        !std::isnan(prev_obj) && std::fabs(obj - prev_obj) <= cfg.objective_tol * (1.0 + std::fabs(obj));
    prev_obj = obj;
    if (feas <= cfg.primal_tol && cs <= cfg.slack_tol && plateau) {
      out.primal_feasibility = feas;
      out.complementary_slackness = cs;
      converged = true;
      break;
    }
  }
  if (!converged)
    throw NotConverged("centralized solve did not reach its tolerances in " +
                       std::to_string(rounds) + " rounds");

  std::vector<double> xstar = rr.final_x;
  if (cfg.polish) {
    xstar = polish_feasible(net, utilities, std::move(xstar), 400, 1e-10);
    out.primal_feasibility = primal_feasibility(net, utilities, xstar);
  }

  out.rounds = rounds;
  out.point.x = std::move(xstar);
  out.point.lambda = rr.final_lambda;
  out.point.theta = rr.theta;
  out.point.objective = objective_value(net, utilities, out.point.x);
  return out;
}

namespace {

struct Path {
  int source_pos = -1;
  std::vector<int> links;  // physical links traversed, including the first hop
};

void enumerate_paths(const net::Network& net, int source_pos, std::vector<Path>& out) {
  const net::Flow& flow = net.flows[source_pos];
  std::function<void(int, Path&)> dfs = [&](int node, Path& cur) {
    if (node == flow.destination) {
      out.push_back(cur);
      return;
    }
    const auto it = net.links_out.find({node, source_pos});
    if (it == net.links_out.end()) return;
    for (int l : it->second) {
      cur.links.push_back(l);
      dfs(net.other_end(l, node), cur);
      cur.links.pop_back();
    }
  };
  for (int l : net.source_links[source_pos]) {
    Path p;
    p.source_pos = source_pos;
    p.links.push_back(l);
    dfs(net.other_end(l, net.sources[source_pos]), p);
  }
}

}  // namespace

OracleSolution brute_force_nonconvex(const net::Network& net,
                                     const std::vector<moments::UtilitySpec>& utilities,
                                     double grid_step) {
  if (net.sources.size() > 3)
    throw TooLarge("brute force oracle is limited to three sources");
  std::vector<Path> paths;
  for (size_t sp = 0; sp < net.sources.size(); ++sp) {
    std::vector<Path> mine;
    enumerate_paths(net, static_cast<int>(sp), mine);
    if (mine.empty()) throw TooLarge("flow has no path to its destination");
    if (mine.size() > 4) throw TooLarge("brute force oracle is limited to four paths per source");
    paths.insert(paths.end(), mine.begin(), mine.end());
  }

  // Per-path rate cap: the tightest link on the path and the source's zeta.
  std::vector<int> steps(paths.size());
  long long cells = 1;
  for (size_t p = 0; p < paths.size(); ++p) {
    double cap = utilities[paths[p].source_pos].rate_upper;
    for (int l : paths[p].links) cap = std::min(cap, net.links[l].capacity);
    steps[p] = static_cast<int>(std::floor(cap / grid_step + 1e-9));
    cells *= steps[p] + 1;
    if (cells > 50'000'000)
      throw TooLarge("grid too fine for the brute force oracle");
  }

  std::vector<double> link_load(net.links.size(), 0.0);
  std::vector<double> rates(net.sources.size(), 0.0);
  std::vector<double> rate(paths.size(), 0.0);

  OracleSolution best;
  best.grid_step = grid_step;
  best.objective = -std::numeric_limits<double>::infinity();
  long long visited = 0;

  std::function<void(size_t)> descend = [&](size_t p) {
    if (p == paths.size()) {
      ++visited;
      for (size_t sp = 0; sp < rates.size(); ++sp) {
        const auto& u = utilities[sp];
        if (rates[sp] < u.rate_lower - 1e-12 || rates[sp] > u.rate_upper + 1e-12) return;
      }
      double obj = 0.0;
      for (size_t sp = 0; sp < rates.size(); ++sp)
        obj += moments::eval_utility(utilities[sp], std::max(0.0, rates[sp]));
      if (obj > best.objective + 1e-15) {
        best.objective = obj;
        best.rates = rates;
      }
      return;
    }
    const int sp = paths[p].source_pos;
    for (int s = 0; s <= steps[p]; ++s) {
      const double v = s * grid_step;
      bool ok = true;
      for (int l : paths[p].links)
        if (link_load[l] + v > net.links[l].capacity + 1e-12) {
          ok = false;
          break;
        }
      if (!ok) break;  // loads only grow with s
      for (int l : paths[p].links) link_load[l] += v;
      rates[sp] += v;
      rate[p] = v;
      descend(p + 1);
      for (int l : paths[p].links) link_load[l] -= v;
      rates[sp] -= v;
    }
  };
  descend(0);
  best.cells_visited = visited;

  if (best.objective == -std::numeric_limits<double>::infinity())
    throw NotConverged("brute force oracle found no feasible grid point");
  return best;
}

GapReport relaxation_gap(const ReferenceSolution& ref, const OracleSolution& oracle, double tol) {
  GapReport rep;
  rep.reference_objective = ref.point.objective;
  rep.oracle_objective = oracle.objective;
  rep.gap = ref.point.objective - oracle.objective;
  rep.upper_bound_holds = rep.gap >= -tol;
  return rep;
}

}  // namespace numax::baselines
