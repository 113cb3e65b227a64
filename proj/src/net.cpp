#include "numax/net.hpp"

#include <algorithm>
#include <set>

namespace numax::net {

namespace {

std::string flow_name(const Flow& f) { return "flow " + std::to_string(f.id); }

}  // namespace

int Network::other_end(int link, int node) const {
  const Link& l = links[link];
  return l.from == node ? l.to : l.from;
}

int Network::source_position(int node_idx) const {
  for (size_t i = 0; i < sources.size(); ++i)
    if (sources[i] == node_idx) return static_cast<int>(i);
  return -1;
}

int Network::source_var(int source_pos, int local_link) const {
  return source_block_offset[source_pos] + local_link;
}

int Network::moment_var(int source_pos, int j) const {
  return source_block_offset[source_pos] + static_cast<int>(source_links[source_pos].size()) + j;
}

int Network::aggregate_var(int source_pos) const {
  return moment_var(source_pos, moment_order) + 1;
}

Network build_network(const NetworkSpec& spec, int moment_order) {
  Network net;
  net.spec = spec;
  net.moment_order = moment_order;

  // Nodes and links.
  for (const NodeSpec& ns : spec.nodes) {
    if (net.node_index.count(ns.id))
      throw NetworkError(NetworkErrorCode::invalid_spec, "duplicate node id " + ns.id);
    net.node_index[ns.id] = static_cast<int>(net.nodes.size());
    net.nodes.push_back({ns.id, ns.kind, {}});
  }
  for (const LinkSpec& ls : spec.links) {
    if (ls.capacity <= 0.0)
      throw NetworkError(NetworkErrorCode::non_positive_capacity,
                         "link " + ls.id + " has non-positive capacity");
    if (!net.node_index.count(ls.from) || !net.node_index.count(ls.to))
      throw NetworkError(NetworkErrorCode::invalid_spec, "link " + ls.id + " references unknown node");
    if (ls.from == ls.to)
      throw NetworkError(NetworkErrorCode::invalid_spec, "link " + ls.id + " is a self loop");
    if (net.link_index.count(ls.id))
      throw NetworkError(NetworkErrorCode::invalid_spec, "duplicate link id " + ls.id);
    const int idx = static_cast<int>(net.links.size());
    net.link_index[ls.id] = idx;
    net.links.push_back({ls.id, net.node_index[ls.from], net.node_index[ls.to], ls.capacity,
                         ls.bidirectional});
    net.nodes[net.links[idx].from].links.push_back(idx);
    net.nodes[net.links[idx].to].links.push_back(idx);
  }

  // Flow bijection between sources and destinations.
  std::vector<FlowSpec> flows_sorted = spec.flows;
  std::sort(flows_sorted.begin(), flows_sorted.end(),
            [](const FlowSpec& a, const FlowSpec& b) { return a.id < b.id; });
  std::set<std::string> used_sources, used_destinations;
  for (const FlowSpec& fs : flows_sorted) {
    if (!net.node_index.count(fs.source) || !net.node_index.count(fs.destination))
      throw NetworkError(NetworkErrorCode::flow_bijection_violation,
                         "flow " + std::to_string(fs.id) + " references unknown node");
    const int s = net.node_index[fs.source];
    const int d = net.node_index[fs.destination];
    if (net.nodes[s].kind != NodeKind::source || net.nodes[d].kind != NodeKind::destination)
      throw NetworkError(NetworkErrorCode::flow_bijection_violation,
                         "flow " + std::to_string(fs.id) + " endpoints have wrong node kinds");
    if (!used_sources.insert(fs.source).second || !used_destinations.insert(fs.destination).second)
      throw NetworkError(NetworkErrorCode::flow_bijection_violation,
                         "flow " + std::to_string(fs.id) + " reuses a source or destination");
    net.flows.push_back({fs.id, s, d});
  }
  size_t n_src = 0, n_dst = 0;
  for (const Node& nd : net.nodes) {
    if (nd.kind == NodeKind::source) ++n_src;
    if (nd.kind == NodeKind::destination) ++n_dst;
    const int idx = net.node_index[nd.id];
    if (nd.kind == NodeKind::forwarding) net.forwarders.push_back(idx);
    if (nd.kind == NodeKind::destination) net.destinations.push_back(idx);
  }
  if (n_src != n_dst || n_src != net.flows.size())
    throw NetworkError(NetworkErrorCode::flow_bijection_violation,
                       "sources, destinations and flows must be in one-to-one correspondence");

  // Sources ordered by flow id; each source owns exactly one flow.
  for (const Flow& f : net.flows) net.sources.push_back(f.source);

  // First-hop links.
  net.source_links.resize(net.sources.size());
  for (size_t sp = 0; sp < net.sources.size(); ++sp) {
    const Flow& flow = net.flows[sp];
    const std::string& sid = net.nodes[flow.source].id;
    const auto it = spec.source_routing.find(sid);
    if (it == spec.source_routing.end() || it->second.empty())
      throw NetworkError(NetworkErrorCode::routing_incomplete,
                         "source " + sid + " has no first-hop links");
    for (const std::string& lid : it->second) {
      const auto lit = net.link_index.find(lid);
      if (lit == net.link_index.end())
        throw NetworkError(NetworkErrorCode::dangling_next_hop,
                           "source " + sid + " routes over unknown link " + lid);
      const Link& l = net.links[lit->second];
      if (l.from != flow.source && !(l.bidirectional && l.to == flow.source))
        throw NetworkError(NetworkErrorCode::dangling_next_hop,
                           "link " + lid + " does not leave source " + sid);
      const int head = net.other_end(lit->second, flow.source);
      if (net.nodes[head].kind == NodeKind::source)
        throw NetworkError(NetworkErrorCode::invalid_spec,
                           "source " + sid + " routes into another source");
      if (net.nodes[head].kind == NodeKind::destination && head != flow.destination)
        throw NetworkError(NetworkErrorCode::invalid_spec,
                           "source " + sid + " routes into a foreign destination");
      net.source_links[sp].push_back(lit->second);
    }
  }

  // Routing keys must be forwarding nodes.
  for (const auto& [bid, per_flow] : spec.routing) {
    const auto nit = net.node_index.find(bid);
    if (nit == net.node_index.end())
      throw NetworkError(NetworkErrorCode::invalid_spec, "routing references unknown node " + bid);
    if (net.nodes[nit->second].kind != NodeKind::forwarding)
      throw NetworkError(NetworkErrorCode::invalid_spec,
                         "routing entry at non-forwarding node " + bid);
    (void)per_flow;
  }

  net.flows_at.resize(net.nodes.size());

  // Per-flow traversal: derive every index set and detect loops / dead ends.
  std::set<std::pair<int, int>> routing_used;  // (node, flow) entries consumed
  for (size_t fp = 0; fp < net.flows.size(); ++fp) {
    const Flow& flow = net.flows[fp];
    const int fidx = static_cast<int>(fp);

    // DFS colors over forwarding nodes for this flow.
    std::map<int, int> color;  // 0 white, 1 gray, 2 black
    const auto visit = [&](auto&& self, int b) -> void {
      color[b] = 1;
      const std::string& bid = net.nodes[b].id;
      const auto rit = spec.routing.find(bid);
      const bool has = rit != spec.routing.end() && rit->second.count(flow.id) &&
                       !rit->second.at(flow.id).empty();
      if (!has)
        throw NetworkError(NetworkErrorCode::routing_incomplete,
                           flow_name(net.flows[fp]) + " visits node " + bid +
                               " which has no routing entry for it");
      routing_used.insert({b, flow.id});
      for (const std::string& hop_id : rit->second.at(flow.id)) {
        const auto hit = net.node_index.find(hop_id);
        if (hit == net.node_index.end())
          throw NetworkError(NetworkErrorCode::dangling_next_hop,
                             "node " + bid + " routes " + flow_name(net.flows[fp]) +
                                 " to unknown node " + hop_id);
        const int hop = hit->second;
        if (hop == flow.source)
          throw NetworkError(NetworkErrorCode::invalid_spec,
                             flow_name(net.flows[fp]) + " routed back to its own source");
        if (net.nodes[hop].kind == NodeKind::source)
          throw NetworkError(NetworkErrorCode::invalid_spec,
                             flow_name(net.flows[fp]) + " routed into a source node");
        if (net.nodes[hop].kind == NodeKind::destination && hop != flow.destination)
          throw NetworkError(NetworkErrorCode::invalid_spec,
                             flow_name(net.flows[fp]) + " routed into a foreign destination");
        // Resolve the unique link b -> hop.
        int use_link = -1;
        for (int l : net.nodes[b].links) {
          const Link& lk = net.links[l];
          const bool forward_ok = (lk.from == b && lk.to == hop) ||
                                  (lk.bidirectional && lk.from == hop && lk.to == b);
          if (forward_ok) {
            if (use_link != -1)
              throw NetworkError(NetworkErrorCode::invalid_spec,
                                 "ambiguous parallel links between " + bid + " and " + hop_id);
            use_link = l;
          }
        }
        if (use_link == -1)
          throw NetworkError(NetworkErrorCode::dangling_next_hop,
                             "node " + bid + " routes " + flow_name(net.flows[fp]) +
                                 " to non-adjacent node " + hop_id);

        net.links_out[{b, fidx}].push_back(use_link);
        net.flows_out[{b, use_link}].push_back(fidx);
        if (net.nodes[hop].kind == NodeKind::forwarding) {
          net.links_in[{hop, fidx}].push_back(use_link);
          net.flows_in[{hop, use_link}].push_back(fidx);
          if (std::find(net.flows_at[hop].begin(), net.flows_at[hop].end(), fidx) ==
              net.flows_at[hop].end())
            net.flows_at[hop].push_back(fidx);
          const int c = color.count(hop) ? color[hop] : 0;
          if (c == 1)
            throw NetworkError(NetworkErrorCode::routing_loop,
                               flow_name(net.flows[fp]) + " has a routing loop through " + hop_id);
          if (c == 0) self(self, hop);
        }
      }
      color[b] = 2;
    };

    for (int l : net.source_links[fp]) {
      const int head = net.other_end(l, flow.source);
      if (net.nodes[head].kind == NodeKind::destination) continue;  // direct delivery
      net.links_in[{head, fidx}].push_back(l);
      net.flows_in[{head, l}].push_back(fidx);
      if (std::find(net.flows_at[head].begin(), net.flows_at[head].end(), fidx) ==
          net.flows_at[head].end())
        net.flows_at[head].push_back(fidx);
      const int c = color.count(head) ? color[head] : 0;
      if (c == 0) visit(visit, head);
    }
  }

  // Routing entries that no flow ever uses violate the "nonempty iff visiting"
  // invariant.
  for (const auto& [bid, per_flow] : spec.routing) {
    const int b = net.node_index[bid];
    for (const auto& [flow_id, hops] : per_flow) {
      if (hops.empty()) continue;
      if (!routing_used.count({b, flow_id}))
        throw NetworkError(NetworkErrorCode::invalid_spec,
                           "routing entry for flow " + std::to_string(flow_id) + " at node " +
                               bid + " but the flow never visits it");
    }
  }

  for (auto& fl : net.flows_at) std::sort(fl.begin(), fl.end());
  for (auto& [key, v] : net.flows_out) std::sort(v.begin(), v.end());
  for (auto& [key, v] : net.flows_in) std::sort(v.begin(), v.end());

  // Distinct flows crossing each link (either direction).
  net.flows_on_link.assign(net.links.size(), 0);
  for (size_t l = 0; l < net.links.size(); ++l) {
    std::set<int> using_flows;
    const int from = net.links[l].from;
    const int to = net.links[l].to;
    for (int end : {from, to}) {
      const auto it = net.flows_out.find({end, static_cast<int>(l)});
      if (it != net.flows_out.end()) using_flows.insert(it->second.begin(), it->second.end());
    }
    for (size_t sp = 0; sp < net.sources.size(); ++sp)
      for (int sl : net.source_links[sp])
        if (sl == static_cast<int>(l)) using_flows.insert(static_cast<int>(sp));
    net.flows_on_link[l] = static_cast<int>(using_flows.size());
  }

  // Flattened decision vector: source blocks first, then forwarding variables
  // grouped by (node, link, flow).
  for (size_t sp = 0; sp < net.sources.size(); ++sp) {
    net.source_block_offset.push_back(net.dimension());
    for (int l : net.source_links[sp])
      net.variables.push_back({VarKind::source_rate, net.sources[sp], static_cast<int>(sp), l, -1});
    for (int j = 0; j <= moment_order; ++j)
      net.variables.push_back({VarKind::moment, net.sources[sp], static_cast<int>(sp), -1, j});
    net.variables.push_back({VarKind::aggregate, net.sources[sp], static_cast<int>(sp), -1, -1});
  }
  net.forward_var_base = net.dimension();
  for (int b : net.forwarders) {
    std::vector<int> lb = net.nodes[b].links;
    std::sort(lb.begin(), lb.end());
    for (int l : lb) {
      const auto it = net.flows_out.find({b, l});
      if (it == net.flows_out.end()) continue;
      for (int f : it->second) {
        net.forward_var_index[{f, b, l}] = net.dimension();
        net.variables.push_back({VarKind::forward_rate, b, f, l, -1});
      }
    }
  }

  const auto var_of = [&](int flow, int node, int link) -> int {
    if (net.nodes[node].kind == NodeKind::source) {
      const int sp = net.source_position(node);
      const auto& ls = net.source_links[sp];
      for (size_t k = 0; k < ls.size(); ++k)
        if (ls[k] == link) return net.source_var(sp, static_cast<int>(k));
      throw NetworkError(NetworkErrorCode::invalid_spec, "internal: missing source variable");
    }
    return net.forward_var_index.at({flow, node, link});
  };

  // Capacity rows: every ordered (forwarding node, link) pair.
  for (int b : net.forwarders) {
    std::vector<int> lb = net.nodes[b].links;
    std::sort(lb.begin(), lb.end());
    for (int l : lb) {
      CapacityRow row;
      row.node = b;
      row.link = l;
      row.capacity = net.links[l].capacity;
      if (const auto it = net.flows_out.find({b, l}); it != net.flows_out.end())
        for (int f : it->second) row.out_vars.push_back(var_of(f, b, l));
      if (net.links[l].bidirectional) {
        const int other = net.other_end(l, b);
        if (const auto it = net.flows_in.find({b, l}); it != net.flows_in.end())
          for (int f : it->second) row.in_vars.push_back(var_of(f, other, l));
      }
      net.capacity_rows.push_back(std::move(row));
    }
  }

  // Conservation rows: every (forwarding node, flow) pair.
  for (int b : net.forwarders) {
    for (int f : net.flows_at[b]) {
      ConservationRow row;
      row.node = b;
      row.flow = f;
      if (const auto it = net.links_out.find({b, f}); it != net.links_out.end())
        for (int l : it->second) row.out_vars.push_back(var_of(f, b, l));
      if (const auto it = net.links_in.find({b, f}); it != net.links_in.end())
        for (int l : it->second) row.in_vars.push_back(var_of(f, net.other_end(l, b), l));
      net.conservation_rows.push_back(std::move(row));
    }
  }

  return net;
}

Matrix incidence_matrix(const Network& net) {
  Matrix b(static_cast<int>(net.conservation_rows.size()), net.dimension());
  for (size_t r = 0; r < net.conservation_rows.size(); ++r) {
    for (int v : net.conservation_rows[r].out_vars) b(static_cast<int>(r), v) += 1.0;
    for (int v : net.conservation_rows[r].in_vars) b(static_cast<int>(r), v) -= 1.0;
  }
  return b;
}

Matrix capacity_matrix(const Network& net) {
  Matrix a(static_cast<int>(net.capacity_rows.size()), net.dimension());
  for (size_t r = 0; r < net.capacity_rows.size(); ++r) {
    for (int v : net.capacity_rows[r].out_vars) a(static_cast<int>(r), v) += 1.0;
    for (int v : net.capacity_rows[r].in_vars) a(static_cast<int>(r), v) += 1.0;
  }
  return a;
}

double link_load(const Network& net, std::span<const double> x, int node, int link) {
  for (const CapacityRow& row : net.capacity_rows) {
    if (row.node == node && row.link == link) {
      double acc = 0.0;
      for (int v : row.out_vars) acc += x[v];
      for (int v : row.in_vars) acc += x[v];
      return acc;
    }
  }
  throw NetworkError(NetworkErrorCode::unknown_link, "link is not incident to the node");
}

double link_load(const Network& net, std::span<const double> x, const std::string& node_id,
                 const std::string& link_id) {
  const auto nit = net.node_index.find(node_id);
  const auto lit = net.link_index.find(link_id);
  if (nit == net.node_index.end() || lit == net.link_index.end())
    throw NetworkError(NetworkErrorCode::unknown_link, "unknown node or link id");
  return link_load(net, x, nit->second, lit->second);
}

}  // namespace numax::net
