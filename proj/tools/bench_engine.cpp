// Benchmark of the round engine: serial reference vs the OpenMP path on a
// synthetic funnel family, with a bitwise equality check between the two.

#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#include "numax/dpda.hpp"
#include "numax/harness.hpp"
#include "numax/net.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace numax;

namespace {

net::NetworkSpec funnel(int n_sources, double bottleneck) {
  using namespace net;
  NetworkSpec spec;
  spec.nodes.push_back({"b1", NodeKind::forwarding});
  spec.nodes.push_back({"b2", NodeKind::forwarding});
  for (int i = 1; i <= n_sources; ++i) {
    const std::string n = std::to_string(i);
    spec.nodes.push_back({"s" + n, NodeKind::source});
    spec.nodes.push_back({"d" + n, NodeKind::destination});
    spec.links.push_back({"a" + n, "s" + n, "b1", 10.0, false});
    spec.links.push_back({"e" + n, "b2", "d" + n, 10.0, false});
    spec.flows.push_back({i, "s" + n, "d" + n});
    spec.routing["b1"][i] = {"b2"};
    spec.routing["b2"][i] = {"d" + n};
    spec.source_routing["s" + n] = {"a" + n};
  }
  spec.links.push_back({"t", "b1", "b2", bottleneck, false});
  return spec;
}

moments::UtilitySpec step_utility() {
  moments::UtilitySpec u;
  u.order = 6;
  u.coefficients = {0.0, 1.763, -20.718, 88.568, -169.102, 145.167, -44.677};
  u.rate_lower = 0.0;
  u.rate_upper = 10.0;
  u.moment_bound = moments::UtilitySpec::auto_moment_bound(10.0, 6);
  return u;
}

double run_once(const net::Network& network, const std::vector<moments::UtilitySpec>& utilities,
                const dpda::StepSizes& steps, int rounds, bool parallel,
                std::vector<double>* final_x) {
  dpda::RunConfig rc;
  rc.iterations = rounds;
  rc.parallel = parallel;
  const auto t0 = std::chrono::steady_clock::now();
  const dpda::RunResult rr = dpda::run(network, utilities, steps, rc);
  const auto t1 = std::chrono::steady_clock::now();
  if (final_x) *final_x = rr.final_x;
  return std::chrono::duration<double>(t1 - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
  int rounds = 200;
  if (argc > 1) rounds = std::stoi(argv[1]);

#ifdef _OPENMP
  std::printf("openmp: %d threads\n", omp_get_max_threads());
#else
  std::printf("openmp: not compiled in\n");
#endif
  std::printf("%10s %10s %12s %12s %9s %9s\n", "sources", "dimension", "serial s", "openmp s",
              "speedup", "bitwise");

  for (int n_sources : {2, 4, 8, 16}) {
    const net::Network network = net::build_network(funnel(n_sources, 4.0), 6);
    const std::vector<moments::UtilitySpec> utilities(n_sources, step_utility());
    const dpda::StepSizes steps = dpda::auto_step_sizes(network, 0.2, 0.9);

    std::vector<double> x_serial, x_parallel;
    const double ts = run_once(network, utilities, steps, rounds, false, &x_serial);
    const double tp = run_once(network, utilities, steps, rounds, true, &x_parallel);
    const bool same = x_serial == x_parallel;
    std::printf("%10d %10d %12.3f %12.3f %9.2f %9s\n", n_sources, network.dimension(), ts, tp,
                ts / tp, same ? "yes" : "NO");
    if (!same) return 1;
  }
  return 0;
}
