#pragma once

// Shared test fixtures: the two-flow micro network used across the module
// tests, the step-like degree-6 utility, and a seeded generator of random
// desk-scale networks.

#include <random>
#include <string>
#include <vector>

#include "numax/moments.hpp"
#include "numax/net.hpp"

namespace fixtures {

inline numax::moments::UtilitySpec step_utility(double lo = 0.0, double hi = 10.0) {
  numax::moments::UtilitySpec u;
  u.order = 6;
  u.coefficients = {0.0, 1.763, -20.718, 88.568, -169.102, 145.167, -44.677};
  u.rate_lower = lo;
  u.rate_upper = hi;
  u.moment_bound = numax::moments::UtilitySpec::auto_moment_bound(hi, 6);
  return u;
}

inline numax::moments::UtilitySpec concave_sqrt_utility(int order = 2, double hi = 10.0) {
  numax::moments::UtilitySpec u;
  u.order = order;
  u.coefficients.assign(order + 1, 0.0);
  u.coefficients[1] = 1.0;  // U(r) = r^(1/order)
  u.rate_lower = 0.0;
  u.rate_upper = hi;
  u.moment_bound = numax::moments::UtilitySpec::auto_moment_bound(hi, order);
  return u;
}

// Two flows, three forwarding nodes, seven links; l3 is the shared
// bidirectional link, l2 the unidirectional one.
//   flow 1: s1 -l1-> b2 -l3-> b3 -> {l4 -> d1, l7 -> b1 -l5-> d1}
//   flow 2: s2 -l6-> b3 -l3-> b2 -l2-> d2
inline numax::net::NetworkSpec micro_network(double c3 = 10.0) {
  using namespace numax::net;
  NetworkSpec spec;
  spec.nodes = {{"s1", NodeKind::source},      {"s2", NodeKind::source},
                {"b1", NodeKind::forwarding},  {"b2", NodeKind::forwarding},
                {"b3", NodeKind::forwarding},  {"d1", NodeKind::destination},
                {"d2", NodeKind::destination}};
  spec.links = {{"l1", "s1", "b2", 10.0, false}, {"l2", "b2", "d2", 10.0, false},
                {"l3", "b2", "b3", c3, true},    {"l4", "b3", "d1", 10.0, false},
                {"l5", "b1", "d1", 10.0, false}, {"l6", "s2", "b3", 10.0, false},
                {"l7", "b3", "b1", 10.0, false}};
  spec.flows = {{1, "s1", "d1"}, {2, "s2", "d2"}};
  spec.routing["b2"][1] = {"b3"};
  spec.routing["b2"][2] = {"d2"};
  spec.routing["b3"][1] = {"d1", "b1"};
  spec.routing["b3"][2] = {"b2"};
  spec.routing["b1"][1] = {"d1"};
  spec.source_routing["s1"] = {"l1"};
  spec.source_routing["s2"] = {"l6"};
  return spec;
}

inline numax::net::NetworkSpec single_hop_network(double cap = 10.0) {
  using namespace numax::net;
  NetworkSpec spec;
  spec.nodes = {{"s1", NodeKind::source}, {"d1", NodeKind::destination}};
  spec.links = {{"l1", "s1", "d1", cap, false}};
  spec.flows = {{1, "s1", "d1"}};
  spec.source_routing["s1"] = {"l1"};
  return spec;
}

// Three sources funneled through one bottleneck link.
//   s_i -> b1  (access capacity 10), b1 -> b2 (shared, capacity `bottleneck`),
//   b2 -> d_i (capacity 10).
inline numax::net::NetworkSpec funnel_network(double bottleneck = 4.0, int n_sources = 3) {
  using namespace numax::net;
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

// Random desk-scale network: a forwarding chain with optional express links,
// unidirectional everywhere, at most two-way splits and merges. This keeps
// every local degree small enough for the default step-size rule.
inline numax::net::NetworkSpec random_desk_network(std::mt19937_64& rng) {
  using namespace numax::net;
  std::uniform_int_distribution<int> n_fwd_dist(2, 4);
  std::uniform_int_distribution<int> n_src_dist(1, 3);
  std::uniform_real_distribution<double> cap_dist(2.0, 10.0);
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  const int F = n_fwd_dist(rng);
  const int S = n_src_dist(rng);

  NetworkSpec spec;
  for (int j = 0; j < F; ++j) spec.nodes.push_back({"b" + std::to_string(j + 1), NodeKind::forwarding});

  // Chain links b_j -> b_{j+1}.
  for (int j = 0; j + 1 < F; ++j)
    spec.links.push_back({"c" + std::to_string(j + 1), "b" + std::to_string(j + 1),
                          "b" + std::to_string(j + 2), cap_dist(rng), false});
  // At most one express link two hops ahead (b1 -> b3).
  const bool has_express = F >= 3 && uni(rng) < 0.5;
  if (has_express) spec.links.push_back({"x1", "b1", "b3", cap_dist(rng), false});

  for (int i = 1; i <= S; ++i) {
    const std::string n = std::to_string(i);
    std::uniform_int_distribution<int> entry_dist(0, F - 1);
    int entry = entry_dist(rng);
    std::uniform_int_distribution<int> exit_dist(entry, F - 1);
    const int exit = exit_dist(rng);

    spec.nodes.push_back({"s" + n, NodeKind::source});
    spec.nodes.push_back({"d" + n, NodeKind::destination});
    spec.flows.push_back({i, "s" + n, "d" + n});
    spec.links.push_back({"a" + n, "s" + n, "b" + std::to_string(entry + 1), 10.0, false});
    spec.links.push_back({"e" + n, "b" + std::to_string(exit + 1), "d" + n, 10.0, false});
    spec.source_routing["s" + n] = {"a" + n};

    for (int j = entry; j <= exit; ++j) {
      const std::string bid = "b" + std::to_string(j + 1);
      if (j == exit) {
        spec.routing[bid][i] = {"d" + n};
      } else if (j == 0 && has_express && exit >= 2 && uni(rng) < 0.7) {
        // Two-way split: chain hop and express hop; branches rejoin at b3.
        spec.routing[bid][i] = {"b2", "b3"};
      } else {
        spec.routing[bid][i] = {"b" + std::to_string(j + 2)};
      }
    }
  }
  return spec;
}

}  // namespace fixtures
