#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "numax/linalg.hpp"

namespace numax::net {

enum class NodeKind { source, forwarding, destination };

struct NodeSpec {
  std::string id;
  NodeKind kind;
};

struct LinkSpec {
  std::string id;
  std::string from;
  std::string to;
  double capacity = 0.0;
  bool bidirectional = false;
};

struct FlowSpec {
  int id = 0;
  std::string source;
  std::string destination;
};

/// Raw network description as it arrives from a scenario file. Routing maps
/// (forwarding node, flow) to an ordered list of next-hop node ids;
/// source_routing lists each source's first-hop link ids.
struct NetworkSpec {
  std::vector<NodeSpec> nodes;
  std::vector<LinkSpec> links;
  std::vector<FlowSpec> flows;
  std::map<std::string, std::map<int, std::vector<std::string>>> routing;
  std::map<std::string, std::vector<std::string>> source_routing;
};

enum class NetworkErrorCode {
  dangling_next_hop,
  non_positive_capacity,
  flow_bijection_violation,
  routing_incomplete,
  routing_loop,
  invalid_spec,
  unknown_link,
};

struct NetworkError : std::runtime_error {
  NetworkErrorCode code;
  NetworkError(NetworkErrorCode c, const std::string& what) : std::runtime_error(what), code(c) {}
};

/// One decision variable of the flattened vector: either a source first-hop
/// rate, a source moment coordinate, a source aggregate rate, or a
/// forwarding rate x_{i,b,l}.
enum class VarKind { source_rate, moment, aggregate, forward_rate };

struct Variable {
  VarKind kind;
  int node = -1;     // owner node index
  int flow = -1;     // flow index (source vars and forward vars)
  int link = -1;     // link index (rate variables)
  int moment_j = -1; // moment coordinate (moment vars)
};

struct Link {
  std::string id;
  int from = -1;
  int to = -1;
  double capacity = 0.0;
  bool bidirectional = false;
};

struct Node {
  std::string id;
  NodeKind kind;
  std::vector<int> links;  // incident link indices
};

struct Flow {
  int id = 0;
  int source = -1;
  int destination = -1;
};

/// A capacity constraint row: ordered (forwarding node, link) pair.
struct CapacityRow {
  int node = -1;
  int link = -1;
  std::vector<int> out_vars;  // variables forwarded from `node` through `link`
  std::vector<int> in_vars;   // variables arriving from e_l(node); empty sum when unidirectional
  double capacity = 0.0;
};

/// A flow-conservation row: (forwarding node, flow) pair.
struct ConservationRow {
  int node = -1;
  int flow = -1;
  std::vector<int> out_vars;
  std::vector<int> in_vars;
};

/// Validated network with every derived index structure the algorithm needs.
struct Network {
  NetworkSpec spec;
  std::vector<Node> nodes;
  std::vector<Link> links;
  std::vector<Flow> flows;
  std::map<std::string, int> node_index;
  std::map<std::string, int> link_index;

  int moment_order = 0;  // order used when flattening (moments per source)

  std::vector<int> sources;       // node indices, ascending id order of spec
  std::vector<int> forwarders;    // node indices
  std::vector<int> destinations;  // node indices

  std::vector<std::vector<int>> source_links;  // per source (position in `sources`): L_s link indices

  // Derived per-node / per-link index sets.
  std::vector<std::vector<int>> flows_at;                  // I_b per node index
  std::map<std::pair<int, int>, std::vector<int>> links_out;  // (node,flow) -> L_{b,i}^out
  std::map<std::pair<int, int>, std::vector<int>> links_in;   // (node,flow) -> L_{b,i}^in
  std::map<std::pair<int, int>, std::vector<int>> flows_out;  // (node,link) -> I_{b,l}^out
  std::map<std::pair<int, int>, std::vector<int>> flows_in;   // (node,link) -> I_{b,l}^in
  std::vector<int> flows_on_link;                             // m_l per link index

  // Flattened decision vector.
  std::vector<Variable> variables;
  std::map<std::tuple<int, int, int>, int> forward_var_index;  // (flow,node,link) -> var
  std::vector<int> source_block_offset;  // per source position: offset of its x block
  int forward_var_base = 0;              // index of the first forwarding variable
  std::vector<CapacityRow> capacity_rows;
  std::vector<ConservationRow> conservation_rows;

  int dimension() const { return static_cast<int>(variables.size()); }
  int other_end(int link, int node) const;
  /// Source variable x_{s,l} index for l in L_s.
  int source_var(int source_pos, int local_link) const;
  int aggregate_var(int source_pos) const;
  int moment_var(int source_pos, int j) const;
  int source_position(int node_index) const;
};

/// Validates the spec and derives every index set. Throws NetworkError.
Network build_network(const NetworkSpec& spec, int moment_order);

/// Edge-node incidence matrix: one row per (forwarding node, flow) pair,
/// +1 on variables leaving the node, -1 on variables arriving.
Matrix incidence_matrix(const Network& net);

/// Capacity matrix: one row per ordered (forwarding node, link) pair with a
/// 1 for every variable whose rate crosses the link under that row.
Matrix capacity_matrix(const Network& net);

/// Load on link l observed at forwarding node b for a flattened vector x.
double link_load(const Network& net, std::span<const double> x, int node, int link);
double link_load(const Network& net, std::span<const double> x, const std::string& node_id,
                 const std::string& link_id);

}  // namespace numax::net
