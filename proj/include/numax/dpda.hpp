#pragma once

#include <optional>
#include <string>
#include <vector>

#include "numax/geometry.hpp"
#include "numax/moments.hpp"
#include "numax/net.hpp"

namespace numax::dpda {

/// Primal-dual step sizes. Forward entries are indexed by the variable's
/// ordinal among forwarding variables (global index minus the source-block
/// size); kappa is indexed by capacity row.
struct StepSizes {
  double gamma = 0.0;
  std::vector<double> tau_source;
  std::vector<double> tau_forward;
  std::vector<double> kappa;
  std::vector<double> d_source;
  std::vector<double> d_forward;
};

struct StepSizeViolation {
  std::string where;
  double lhs = 0.0;
  double rhs = 0.0;
};

struct StepSizeInvalid : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Checks the two step-size inequalities:
///   1/tau_s - gamma*(4 + d_s) >= 0                         per source,
///   (1/kappa_{b,l}) * (1/tau_{i,b,l} - gamma*(4+d_{i,b,l})) >= m_l + 1
/// per forwarding variable, with m_l the number of flows on the link.
std::vector<StepSizeViolation> validate_step_sizes(const net::Network& net, const StepSizes& ss);

/// Boundary step sizes scaled by `margin` in (0, 1]: d = 4 everywhere,
/// kappa = 1, and tau chosen so the inequalities hold with slack 1/margin.
StepSizes auto_step_sizes(const net::Network& net, double gamma, double margin);

struct SourceNodeState {
  int source_pos = -1;
  std::vector<double> x;       // current iterate, per first-hop link
  std::vector<double> x_prev;  // previous iterate
  moments::MomentVector m;
  double r = 0.0;
  std::vector<double> z;       // per first-hop link
};

struct ForwardVar {
  int flow = -1;  // flow position
  int link = -1;
  double x = 0.0;
  double x_prev = 0.0;
  double z = 0.0;
};

struct ForwardNodeState {
  int node = -1;                // node index in the network
  std::vector<ForwardVar> vars; // grouped by (link, flow), ascending
  std::vector<double> u;        // local divergence per flow in I_b order
  std::vector<double> lambda;   // per incident link, ascending link order
};

/// Inbox for a source update: per first-hop link, the sum of the neighbor's
/// outgoing z values for this flow (zero and inactive when the first hop is
/// the destination).
struct SourceInbox {
  std::vector<double> neighbor_out_z_sum;
  std::vector<uint8_t> active;
};

/// Inbox for a forwarding update: per variable, the downstream node's
/// published divergence for the variable's flow (zero past a destination).
struct ForwardInbox {
  std::vector<double> downstream_u;
};

/// Inbox for a price update: per incident link, the extrapolated
/// (2x^{k+1} - x^k) load contributed by the other endpoint; zero when the
/// link is unidirectional.
struct PriceInbox {
  std::vector<double> neighbor_extrapolated;
};

/// Inbox for recomputing divergences: per flow in I_b, the sum of upstream
/// z values over the flow's in-links.
struct DivergenceInbox {
  std::vector<double> in_z_sum;
};

/// One round of the source's primal update: gradient steps on the rate and
/// moment blocks followed by projection onto the source set.
SourceNodeState source_update(const SourceNodeState& state, const SourceInbox& inbox,
                              double gamma, double tau, const moments::UtilitySpec& u,
                              std::span<const double> link_caps,
                              const geometry::DykstraConfig& cfg,
                              geometry::SourceProjectionWork& work);

/// Static per-node wiring for the forwarding updates: how variables map onto
/// local links, prices and divergence slots.
struct ForwardWiring {
  std::vector<int> u_slot;                      // per var: flow position in I_b
  std::vector<int> lambda_slot;                 // per var: local link position
  std::vector<std::vector<int>> link_out_vars;  // per local link: var positions
  std::vector<double> link_caps;                // per local link
  std::vector<std::vector<int>> div_out_vars;   // per I_b flow: var positions
};

/// One round of the forwarding primal update:
///   x <- max(0, x - tau*(lambda + gamma*(u_own - u_downstream))).
ForwardNodeState forward_update(const ForwardNodeState& state, const ForwardInbox& inbox,
                                const ForwardWiring& wiring, std::span<const double> tau,
                                double gamma);

/// Price ascent with extrapolated loads; operates in place on `state`.
void price_update(ForwardNodeState& state, const PriceInbox& inbox, const ForwardWiring& wiring,
                  std::span<const double> kappa);

/// z <- z - x_prev + 2 x, elementwise.
void z_update(std::span<double> z, std::span<const double> x_prev, std::span<const double> x);
void z_update(ForwardNodeState& state);

/// Recompute the published divergence u_{i,b} = sum(out z) - sum(in z).
void update_divergence(ForwardNodeState& state, const DivergenceInbox& inbox,
                       const ForwardWiring& wiring);

enum class ReadKind : uint8_t { z_value, u_value, x_value, x_prev_value };

struct Read {
  int round;
  uint8_t stage;
  int reader;  // node index
  int owner;   // node index
  ReadKind kind;
  int detail;  // variable / flow ordinal on the owner side
};

struct MessageLog {
  bool enabled = false;
  std::vector<Read> reads;
};

/// Count of reads whose owner is neither the reader nor a 1-hop neighbor.
int count_nonlocal_reads(const net::Network& net, const MessageLog& log);

struct TraceRow {
  int k = 0;  // 1-based round counter
  double utility = 0.0;
  double conservation_residual = 0.0;
  double capacity_distance = 0.0;
  double max_source_violation = 0.0;
  std::vector<double> avg_rates;       // per source
  std::vector<double> avg_link_loads;  // per capacity row
};

struct RunTrace {
  std::vector<double> initial_x;              // flattened x^0
  std::vector<std::vector<double>> iterates;  // flattened x^k, k = 1..K
  std::vector<double> xbar;                   // running average at the end
  std::vector<TraceRow> rows;
};

struct RunConfig {
  int iterations = 1000;
  bool record_messages = false;
  bool record_duals = false;
  bool parallel = false;
  bool enforce_step_validity = true;
  std::optional<unsigned> shuffle_seed;  // permute within-round update order
  geometry::DykstraConfig projection;
};

struct RunResult {
  RunTrace trace;
  MessageLog log;
  std::vector<SourceNodeState> sources;
  std::vector<ForwardNodeState> forwarders;
  std::vector<double> final_x;                     // flattened x^K
  std::vector<double> final_lambda;                // per capacity row
  std::vector<double> theta;                       // gamma * B z at the end
  std::vector<std::vector<double>> lambda_rounds;  // per round when record_duals
};

struct InitState {
  std::optional<std::vector<double>> x0;  // flattened initial iterate
  // Resume a previous run: full node states including z, u and lambda.
  std::optional<std::pair<std::vector<SourceNodeState>, std::vector<ForwardNodeState>>> snapshot;
};

/// Executes K bulk-synchronous rounds. All stage reads go against the
/// previous stage's committed snapshot, so within-round execution order is
/// immaterial; the OpenMP path and the serial path produce identical bits.
RunResult run(const net::Network& net, const std::vector<moments::UtilitySpec>& utilities,
              const StepSizes& ss, const RunConfig& cfg, const InitState& init = {});

/// Reference primal/dual point the residuals are measured against (normally
/// a centralized solve).
struct ReferencePoint {
  std::vector<double> x;       // flattened primal
  std::vector<double> lambda;  // per capacity row
  std::vector<double> theta;   // per conservation row
  double objective = 0.0;
};

struct ResidualRow {
  int k = 0;
  double conservation = 0.0;          // ||B xbar||
  double capacity = 0.0;              // sum of distances to the capacity region
  double utility_gap = 0.0;           // |sum p^T (mbar - m*)|
  double weighted_feasibility = 0.0;  // ||theta*||*||B xbar|| + sum ||lambda*|| h(...)
};

struct DimensionMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

std::vector<ResidualRow> residuals(const net::Network& net, const RunTrace& trace,
                                   const ReferencePoint& reference);

struct CertificateReport {
  int dimension = 0;
  double min_eigenvalue = 0.0;
  bool psd = false;
  double schur_min_eigenvalue = 0.0;  // D_tau - gamma*BtB - At Dk^-1 A
  std::vector<double> witness;        // eigenvector when indefinite
};

struct TooLarge : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Materializes the saddle-point step-size matrix
///   Q = [ D_tau  -A^T  -B^T ; -A  D_kappa  0 ; -B  0  D_gamma ]
/// and reports its minimum eigenvalue, plus the Schur-reduced condition.
CertificateReport q_certificate(const net::Network& net, const StepSizes& ss,
                                int max_dimension = 600);

/// Flattened vector gathered from node states.
std::vector<double> gather_state(const net::Network& net,
                                 const std::vector<SourceNodeState>& sources,
                                 const std::vector<ForwardNodeState>& forwarders);

}  // namespace numax::dpda
