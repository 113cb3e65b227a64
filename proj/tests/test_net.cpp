#include "doctest.h"

#include <random>
#include <set>

#include "fixtures.hpp"
#include "numax/net.hpp"

using namespace numax;
using namespace numax::net;

namespace {

// Per-variable count of conservation rows touching the variable, computed
// from the topology alone. This is the omega pattern of the certificate:
// 1 for source variables and for forwarding variables whose link terminates
// at a destination, 2 when the link continues into another forwarding node.
int omega_of(const Network& net, int var) {
  const Variable& v = net.variables[var];
  if (v.kind == VarKind::moment || v.kind == VarKind::aggregate) return 0;
  const int head = net.other_end(v.link, v.node);
  if (v.kind == VarKind::source_rate) return net.nodes[head].kind == NodeKind::forwarding ? 1 : 0;
  return 1 + (net.nodes[head].kind == NodeKind::forwarding ? 1 : 0);
}

}  // namespace

TEST_SUITE("net") {

TEST_CASE("micro network derives the printed index sets") {
  const Network net = build_network(fixtures::micro_network(), 6);
  const int b3 = net.node_index.at("b3");
  const int l3 = net.link_index.at("l3");

  // Flow 1 (position 0) arrives at b3 through l3 from b2.
  const auto in_it = net.flows_in.find({b3, l3});
  REQUIRE(in_it != net.flows_in.end());
  CHECK(in_it->second == std::vector<int>{0});

  // Dimension: sum_s (|L_s| + order + 2) + forwarding variables.
  int fwd_vars = 0;
  for (const auto& [key, links] : net.links_out) fwd_vars += static_cast<int>(links.size());
  CHECK(net.dimension() == 2 * (1 + 6 + 2) + fwd_vars);
  CHECK(fwd_vars == 6);  // (1,b2,l3) (1,b3,l4) (1,b3,l7) (1,b1,l5) (2,b3,l3) (2,b2,l2)
}

TEST_CASE("micro network forwarding variables") {
  const Network net = build_network(fixtures::micro_network(), 6);
  // flow 1: b2->l3, b3->l4, b3->l7, b1->l5; flow 2: b3->l3, b2->l2.
  CHECK(net.forward_var_index.size() == 6);
}

TEST_CASE("single hop network has no forwarding structure") {
  const Network net = build_network(fixtures::single_hop_network(), 4);
  CHECK(net.source_links[0].size() == 1);
  CHECK(net.forwarders.empty());
  CHECK(net.capacity_rows.empty());
  CHECK(net.conservation_rows.empty());
  CHECK(capacity_matrix(net).rows == 0);
  CHECK(net.dimension() == 1 + 4 + 1 + 1);
}

TEST_CASE("validation failures") {
  NetworkSpec spec = fixtures::micro_network();
  spec.routing["b2"][1] = {"b1"};  // b1 is not adjacent to b2
  CHECK_THROWS_AS((void)build_network(spec, 6), NetworkError);
  try {
    (void)build_network(spec, 6);
  } catch (const NetworkError& e) {
    CHECK(e.code == NetworkErrorCode::dangling_next_hop);
  }

  spec = fixtures::micro_network();
  spec.links[0].capacity = 0.0;
  try {
    (void)build_network(spec, 6);
    CHECK(false);
  } catch (const NetworkError& e) {
    CHECK(e.code == NetworkErrorCode::non_positive_capacity);
  }

  spec = fixtures::micro_network();
  spec.flows[1].destination = "d1";  // two flows into one destination
  try {
    (void)build_network(spec, 6);
    CHECK(false);
  } catch (const NetworkError& e) {
    CHECK(e.code == NetworkErrorCode::flow_bijection_violation);
  }

  spec = fixtures::micro_network();
  spec.routing["b1"].erase(1);  // flow 1 visits b1 but has no routing there
  try {
    (void)build_network(spec, 6);
    CHECK(false);
  } catch (const NetworkError& e) {
    CHECK(e.code == NetworkErrorCode::routing_incomplete);
  }
}

TEST_CASE("incidence matrix rows match the conservation stencil") {
  const Network net = build_network(fixtures::micro_network(), 6);
  const Matrix b = incidence_matrix(net);

  // Row (b3, flow 1): +1 at x_{1,b3,l4} and x_{1,b3,l7}, -1 at x_{1,b2,l3}.
  const int b2 = net.node_index.at("b2");
  const int b3 = net.node_index.at("b3");
  const int l3 = net.link_index.at("l3");
  const int l4 = net.link_index.at("l4");
  const int l7 = net.link_index.at("l7");
  int row = -1;
  for (size_t r = 0; r < net.conservation_rows.size(); ++r)
    if (net.conservation_rows[r].node == b3 && net.conservation_rows[r].flow == 0)
      row = static_cast<int>(r);
  REQUIRE(row >= 0);
  CHECK(b(row, net.forward_var_index.at({0, b3, l4})) == 1.0);
  CHECK(b(row, net.forward_var_index.at({0, b3, l7})) == 1.0);
  CHECK(b(row, net.forward_var_index.at({0, b2, l3})) == -1.0);

  // Moment and aggregate columns are identically zero.
  for (int r = 0; r < b.rows; ++r)
    for (size_t sp = 0; sp < net.sources.size(); ++sp) {
      for (int j = 0; j <= net.moment_order; ++j) CHECK(b(r, net.moment_var(sp, j)) == 0.0);
      CHECK(b(r, net.aggregate_var(sp)) == 0.0);
    }

  // A balanced assignment is in the null space.
  std::vector<double> x(net.dimension(), 0.0);
  const int b1 = net.node_index.at("b1");
  const int l5 = net.link_index.at("l5");
  const int l2 = net.link_index.at("l2");
  x[net.source_var(0, 0)] = 2.0;
  x[net.forward_var_index.at({0, b2, l3})] = 2.0;
  x[net.forward_var_index.at({0, b3, l4})] = 1.5;
  x[net.forward_var_index.at({0, b3, l7})] = 0.5;
  x[net.forward_var_index.at({0, b1, l5})] = 0.5;
  x[net.source_var(1, 0)] = 3.0;
  x[net.forward_var_index.at({1, b3, l3})] = 3.0;
  x[net.forward_var_index.at({1, b2, l2})] = 3.0;
  for (double v : matvec(b, x)) CHECK(v == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("capacity matrix rows reproduce the shared-link constraint") {
  const Network net = build_network(fixtures::micro_network(), 6);
  const Matrix a = capacity_matrix(net);
  const int b2 = net.node_index.at("b2");
  const int b3 = net.node_index.at("b3");
  const int l3 = net.link_index.at("l3");
  const int l2 = net.link_index.at("l2");

  int row_b2l3 = -1, row_b2l2 = -1;
  for (size_t r = 0; r < net.capacity_rows.size(); ++r) {
    if (net.capacity_rows[r].node == b2 && net.capacity_rows[r].link == l3)
      row_b2l3 = static_cast<int>(r);
    if (net.capacity_rows[r].node == b2 && net.capacity_rows[r].link == l2)
      row_b2l2 = static_cast<int>(r);
  }
  REQUIRE(row_b2l3 >= 0);
  REQUIRE(row_b2l2 >= 0);

  // Bidirectional l3 at b2: both directions' variables appear.
  CHECK(a(row_b2l3, net.forward_var_index.at({0, b2, l3})) == 1.0);
  CHECK(a(row_b2l3, net.forward_var_index.at({1, b3, l3})) == 1.0);
  double row_sum = 0.0;
  for (int c = 0; c < a.cols; ++c) row_sum += a(row_b2l3, c);
  CHECK(row_sum == 2.0);

  // Unidirectional l2: only the forwarding endpoint's variable.
  CHECK(a(row_b2l2, net.forward_var_index.at({1, b2, l2})) == 1.0);
  row_sum = 0.0;
  for (int c = 0; c < a.cols; ++c) row_sum += a(row_b2l2, c);
  CHECK(row_sum == 1.0);
}

TEST_CASE("link loads") {
  const Network net = build_network(fixtures::micro_network(), 6);
  std::vector<double> x(net.dimension(), 0.0);
  CHECK(link_load(net, x, "b2", "l3") == 0.0);

  const int b2 = net.node_index.at("b2");
  const int b3 = net.node_index.at("b3");
  const int l3 = net.link_index.at("l3");
  const int l2 = net.link_index.at("l2");
  x[net.forward_var_index.at({0, b2, l3})] = 2.0;
  x[net.forward_var_index.at({1, b3, l3})] = 3.0;
  CHECK(link_load(net, x, "b2", "l3") == doctest::Approx(5.0));
  CHECK(link_load(net, x, "b3", "l3") == doctest::Approx(5.0));

  x[net.forward_var_index.at({1, b2, l2})] = 4.0;
  CHECK(link_load(net, x, "b2", "l2") == doctest::Approx(4.0));

  CHECK_THROWS_AS((void)link_load(net, x, "b1", "l3"), NetworkError);
}

TEST_CASE("flattened index round trip") {
  const Network net = build_network(fixtures::micro_network(), 6);
  for (int v = 0; v < net.dimension(); ++v) {
    const Variable& var = net.variables[v];
    switch (var.kind) {
      case VarKind::source_rate: {
        const int sp = var.flow;
        const auto& ls = net.source_links[sp];
        int local = -1;
        for (size_t k = 0; k < ls.size(); ++k)
          if (ls[k] == var.link) local = static_cast<int>(k);
        REQUIRE(local >= 0);
        CHECK(net.source_var(sp, local) == v);
        break;
      }
      case VarKind::moment:
        CHECK(net.moment_var(var.flow, var.moment_j) == v);
        break;
      case VarKind::aggregate:
        CHECK(net.aggregate_var(var.flow) == v);
        break;
      case VarKind::forward_rate:
        CHECK(net.forward_var_index.at({var.flow, var.node, var.link}) == v);
        break;
    }
  }
}

TEST_CASE("per-link flow sets are consistent") {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 30; ++t) {
    const Network net = build_network(fixtures::random_desk_network(rng), 4);
    for (const auto& [key, flows] : net.flows_out) {
      const auto& [node, link] = key;
      for (int f : flows) {
        const auto& ib = net.flows_at[node];
        const bool visits = std::find(ib.begin(), ib.end(), f) != ib.end();
        CHECK(visits);
        const auto& lout = net.links_out.at({node, f});
        CHECK(std::find(lout.begin(), lout.end(), link) != lout.end());
      }
    }
    // Interior forwarding rows touch at least two variables.
    for (const auto& row : net.conservation_rows)
      CHECK(row.out_vars.size() + row.in_vars.size() >= 2);
  }
}

TEST_CASE("diagonal of BtB matches the omega pattern") {
  std::mt19937_64 rng(23);
  for (int t = 0; t < 30; ++t) {
    const NetworkSpec spec =
        (t == 0) ? fixtures::micro_network() : fixtures::random_desk_network(rng);
    const Network net = build_network(spec, 4);
    const Matrix b = incidence_matrix(net);
    const Matrix btb = multiply(transpose(b), b);
    for (int v = 0; v < net.dimension(); ++v)
      CHECK(btb(v, v) == doctest::Approx(static_cast<double>(omega_of(net, v))));
  }
}

TEST_CASE("flows on link counts distinct flows") {
  const Network net = build_network(fixtures::micro_network(), 6);
  CHECK(net.flows_on_link[net.link_index.at("l3")] == 2);
  CHECK(net.flows_on_link[net.link_index.at("l2")] == 1);
  CHECK(net.flows_on_link[net.link_index.at("l1")] == 1);
}

}  // TEST_SUITE
