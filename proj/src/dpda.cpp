#include "numax/dpda.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace numax::dpda {

namespace {

int forward_ordinal(const net::Network& net, int var) { return var - net.forward_var_base; }

}  // namespace

std::vector<StepSizeViolation> validate_step_sizes(const net::Network& net, const StepSizes& ss) {
  std::vector<StepSizeViolation> out;
  const double slack = -1e-12;

  for (size_t sp = 0; sp < net.sources.size(); ++sp) {
    const double lhs = 1.0 / ss.tau_source[sp] - ss.gamma * (4.0 + ss.d_source[sp]);
    if (lhs < slack) out.push_back({"source " + net.nodes[net.sources[sp]].id, lhs, 0.0});
  }

  // Map each forwarding variable to its capacity row to find kappa.
  std::vector<int> row_of_var(net.dimension(), -1);
  for (size_t r = 0; r < net.capacity_rows.size(); ++r)
    for (int v : net.capacity_rows[r].out_vars) row_of_var[v] = static_cast<int>(r);

  for (int v = net.forward_var_base; v < net.dimension(); ++v) {
    const int ord = forward_ordinal(net, v);
    const int row = row_of_var[v];
    const double kappa = ss.kappa[row];
    const double m_l = net.flows_on_link[net.variables[v].link];
    const double lhs =
        (1.0 / kappa) * (1.0 / ss.tau_forward[ord] - ss.gamma * (4.0 + ss.d_forward[ord]));
    const double rhs = m_l + 1.0;
    if (lhs - rhs < slack) {
      const auto& var = net.variables[v];
      out.push_back({"variable (flow " + std::to_string(net.flows[var.flow].id) + ", " +
                         net.nodes[var.node].id + ", " + net.links[var.link].id + ")",
                     lhs, rhs});
    }
  }
  return out;
}

StepSizes auto_step_sizes(const net::Network& net, double gamma, double margin) {
  StepSizes ss;
  ss.gamma = gamma;
  ss.tau_source.assign(net.sources.size(), margin / (gamma * 8.0));
  ss.d_source.assign(net.sources.size(), 4.0);
  ss.kappa.assign(net.capacity_rows.size(), 1.0);

  const int nf = net.dimension() - net.forward_var_base;
  ss.tau_forward.resize(nf);
  ss.d_forward.assign(nf, 4.0);
  for (int v = net.forward_var_base; v < net.dimension(); ++v) {
    const double m_l = net.flows_on_link[net.variables[v].link];
    ss.tau_forward[forward_ordinal(net, v)] = margin / (gamma * 8.0 + (m_l + 1.0));
  }
  return ss;
}

SourceNodeState source_update(const SourceNodeState& state, const SourceInbox& inbox,
                              double gamma, double tau, const moments::UtilitySpec& u,
                              std::span<const double> link_caps,
                              const geometry::DykstraConfig& cfg,
                              geometry::SourceProjectionWork& work) {
  geometry::SourcePoint pre;
  pre.x.resize(state.x.size());
  for (size_t l = 0; l < state.x.size(); ++l) {
    double coef = 0.0;
    if (inbox.active[l]) coef = state.z[l] - inbox.neighbor_out_z_sum[l];
    pre.x[l] = state.x[l] - gamma * tau * coef;
  }
  pre.m.m.resize(state.m.m.size());
  for (size_t j = 0; j < state.m.m.size(); ++j)
    pre.m.m[j] = state.m.m[j] + tau * u.coefficients[j];
  pre.r = state.r;

  const geometry::ProjectionReport rep = geometry::project_source_set(pre, u, link_caps, cfg, work);
  if (!rep.converged)
    throw geometry::NoConvergence("source projection exceeded its cycle budget (violation " +
                                  std::to_string(rep.max_constraint_violation) + ")");

  SourceNodeState next;
  next.source_pos = state.source_pos;
  next.x = rep.result.x;
  next.x_prev = state.x;
  next.m = rep.result.m;
  next.r = rep.result.r;
  next.z = state.z;
  return next;
}

ForwardNodeState forward_update(const ForwardNodeState& state, const ForwardInbox& inbox,
                                const ForwardWiring& wiring, std::span<const double> tau,
                                double gamma) {
  ForwardNodeState next = state;
  for (size_t p = 0; p < state.vars.size(); ++p) {
    const double lambda = state.lambda[wiring.lambda_slot[p]];
    const double own_u = state.u[wiring.u_slot[p]];
    const double coef = lambda + gamma * (own_u - inbox.downstream_u[p]);
    next.vars[p].x = std::max(0.0, state.vars[p].x - tau[p] * coef);
    next.vars[p].x_prev = state.vars[p].x;
  }
  return next;
}

void price_update(ForwardNodeState& state, const PriceInbox& inbox, const ForwardWiring& wiring,
                  std::span<const double> kappa) {
  for (size_t l = 0; l < state.lambda.size(); ++l) {
    double load = inbox.neighbor_extrapolated[l];
    for (int p : wiring.link_out_vars[l]) load += 2.0 * state.vars[p].x - state.vars[p].x_prev;
    state.lambda[l] = std::max(0.0, state.lambda[l] + kappa[l] * (load - wiring.link_caps[l]));
  }
}

void z_update(std::span<double> z, std::span<const double> x_prev, std::span<const double> x) {
  for (size_t i = 0; i < z.size(); ++i) z[i] += -x_prev[i] + 2.0 * x[i];
}

void z_update(ForwardNodeState& state) {
  for (ForwardVar& v : state.vars) v.z += -v.x_prev + 2.0 * v.x;
}

void update_divergence(ForwardNodeState& state, const DivergenceInbox& inbox,
                       const ForwardWiring& wiring) {
  for (size_t f = 0; f < state.u.size(); ++f) {
    double out = 0.0;
    for (int p : wiring.div_out_vars[f]) out += state.vars[p].z;
    state.u[f] = out - inbox.in_z_sum[f];
  }
}

int count_nonlocal_reads(const net::Network& net, const MessageLog& log) {
  std::vector<std::set<int>> adj(net.nodes.size());
  for (const net::Link& l : net.links) {
    adj[l.from].insert(l.to);
    adj[l.to].insert(l.from);
  }
  int bad = 0;
  for (const Read& r : log.reads)
    if (r.owner != r.reader && !adj[r.reader].count(r.owner)) ++bad;
  return bad;
}

namespace {

// Reference to a published variable on another node.
struct RemoteRef {
  bool from_source = false;
  int owner_pos = -1;   // source position or forwarder position
  int slot = -1;        // local link position (source) or var position (forwarder)
  int owner_node = -1;  // for message logging
};

struct SourceWiring {
  struct Hop {
    bool forwarding = false;
    int fwd_pos = -1;
    int hop_node = -1;
    std::vector<int> out_var_positions;  // downstream out-variables of this flow
  };
  std::vector<Hop> hops;
  std::vector<double> caps;  // first-hop capacities
};

struct EngineWiring {
  std::vector<SourceWiring> sources;
  std::vector<ForwardWiring> forward;
  std::vector<int> fwd_pos_of_node;
  std::vector<std::vector<RemoteRef>> div_in;  // indexed via div_offset
  std::vector<std::vector<int>> div_offset;    // per fwd, per flow slot
  std::vector<std::vector<std::vector<RemoteRef>>> price_in;  // per fwd, per local link
  std::vector<std::vector<double>> kappa_local;               // per fwd, per local link
  std::vector<std::vector<double>> tau_local;                 // per fwd, per var
  std::vector<std::vector<int>> global_var;                   // per fwd, per var position
  // Per fwd var: downstream forwarder position and flow slot, -1 past a destination.
  std::vector<std::vector<int>> down_fwd_pos;
  std::vector<std::vector<int>> down_flow_slot;
  std::vector<std::vector<int>> down_node;
};

EngineWiring build_wiring(const net::Network& net, const StepSizes& ss) {
  EngineWiring w;
  w.fwd_pos_of_node.assign(net.nodes.size(), -1);
  for (size_t fp = 0; fp < net.forwarders.size(); ++fp)
    w.fwd_pos_of_node[net.forwarders[fp]] = static_cast<int>(fp);

  const size_t nf = net.forwarders.size();
  w.forward.resize(nf);
  w.price_in.resize(nf);
  w.kappa_local.resize(nf);
  w.tau_local.resize(nf);
  w.global_var.resize(nf);
  w.down_fwd_pos.resize(nf);
  w.down_flow_slot.resize(nf);
  w.down_node.resize(nf);
  w.div_offset.resize(nf);

  std::map<std::pair<int, int>, int> cap_row_of;
  for (size_t r = 0; r < net.capacity_rows.size(); ++r)
    cap_row_of[{net.capacity_rows[r].node, net.capacity_rows[r].link}] = static_cast<int>(r);

  std::map<std::tuple<int, int, int>, int> local_pos;  // (flow,node,link) -> var position

  for (size_t fp = 0; fp < nf; ++fp) {
    const int b = net.forwarders[fp];
    ForwardWiring& fw = w.forward[fp];
    std::vector<int> lb = net.nodes[b].links;
    std::sort(lb.begin(), lb.end());

    int pos = 0;
    for (int l : lb) {
      const auto it = net.flows_out.find({b, l});
      if (it == net.flows_out.end()) continue;
      for (int f : it->second) local_pos[{f, b, l}] = pos++;
    }
    const int nvars = pos;
    fw.u_slot.resize(nvars);
    fw.lambda_slot.resize(nvars);
    w.tau_local[fp].resize(nvars);
    w.global_var[fp].resize(nvars);
    w.down_fwd_pos[fp].assign(nvars, -1);
    w.down_flow_slot[fp].assign(nvars, -1);
    w.down_node[fp].assign(nvars, -1);

    fw.link_out_vars.resize(lb.size());
    fw.link_caps.resize(lb.size());
    w.kappa_local[fp].resize(lb.size());
    w.price_in[fp].resize(lb.size());

    const auto& flows_here = net.flows_at[b];
    fw.div_out_vars.assign(flows_here.size(), {});

    pos = 0;
    for (size_t li = 0; li < lb.size(); ++li) {
      const int l = lb[li];
      fw.link_caps[li] = net.links[l].capacity;
      const int row = cap_row_of.at({b, l});
      w.kappa_local[fp][li] = ss.kappa[row];

      const auto it = net.flows_out.find({b, l});
      if (it == net.flows_out.end()) continue;
      for (int f : it->second) {
        fw.lambda_slot[pos] = static_cast<int>(li);
        const auto fit = std::find(flows_here.begin(), flows_here.end(), f);
        fw.u_slot[pos] = static_cast<int>(fit - flows_here.begin());
        fw.div_out_vars[fw.u_slot[pos]].push_back(pos);
        const int gv = net.forward_var_index.at({f, b, l});
        w.global_var[fp][pos] = gv;
        w.tau_local[fp][pos] = ss.tau_forward[gv - net.forward_var_base];
        fw.link_out_vars[li].push_back(pos);
        const int down = net.other_end(l, b);
        if (net.nodes[down].kind == net::NodeKind::forwarding) {
          w.down_fwd_pos[fp][pos] = w.fwd_pos_of_node[down];
          const auto& down_flows = net.flows_at[down];
          const auto dit = std::find(down_flows.begin(), down_flows.end(), f);
          w.down_flow_slot[fp][pos] = static_cast<int>(dit - down_flows.begin());
          w.down_node[fp][pos] = down;
        }
        ++pos;
      }
    }
  }

  const auto remote_of = [&](int flow, int node, int link) -> RemoteRef {
    RemoteRef ref;
    ref.owner_node = node;
    if (net.nodes[node].kind == net::NodeKind::source) {
      ref.from_source = true;
      ref.owner_pos = net.source_position(node);
      const auto& ls = net.source_links[ref.owner_pos];
      for (size_t k = 0; k < ls.size(); ++k)
        if (ls[k] == link) ref.slot = static_cast<int>(k);
    } else {
      ref.from_source = false;
      ref.owner_pos = w.fwd_pos_of_node[node];
      ref.slot = local_pos.at({flow, node, link});
    }
    return ref;
  };

  w.sources.resize(net.sources.size());
  for (size_t sp = 0; sp < net.sources.size(); ++sp) {
    SourceWiring& sw = w.sources[sp];
    const int s = net.sources[sp];
    for (int l : net.source_links[sp]) {
      SourceWiring::Hop hop;
      hop.hop_node = net.other_end(l, s);
      sw.caps.push_back(net.links[l].capacity);
      if (net.nodes[hop.hop_node].kind == net::NodeKind::forwarding) {
        hop.forwarding = true;
        hop.fwd_pos = w.fwd_pos_of_node[hop.hop_node];
        const auto it = net.links_out.find({hop.hop_node, static_cast<int>(sp)});
        if (it != net.links_out.end())
          for (int ol : it->second)
            hop.out_var_positions.push_back(local_pos.at({static_cast<int>(sp), hop.hop_node, ol}));
      }
      sw.hops.push_back(std::move(hop));
    }
  }

  for (size_t fp = 0; fp < nf; ++fp) {
    const int b = net.forwarders[fp];
    const auto& flows_here = net.flows_at[b];
    w.div_offset[fp].resize(flows_here.size());
    for (size_t fs = 0; fs < flows_here.size(); ++fs) {
      w.div_offset[fp][fs] = static_cast<int>(w.div_in.size());
      const int f = flows_here[fs];
      std::vector<RemoteRef> refs;
      if (const auto it = net.links_in.find({b, f}); it != net.links_in.end())
        for (int l : it->second) refs.push_back(remote_of(f, net.other_end(l, b), l));
      w.div_in.push_back(std::move(refs));
    }
  }

  for (size_t fp = 0; fp < nf; ++fp) {
    const int b = net.forwarders[fp];
    std::vector<int> lb = net.nodes[b].links;
    std::sort(lb.begin(), lb.end());
    for (size_t li = 0; li < lb.size(); ++li) {
      const int l = lb[li];
      if (!net.links[l].bidirectional) continue;
      const int other = net.other_end(l, b);
      std::vector<RemoteRef> refs;
      if (const auto it = net.flows_in.find({b, l}); it != net.flows_in.end())
        for (int f : it->second) refs.push_back(remote_of(f, other, l));
      w.price_in[fp][li] = std::move(refs);
    }
  }

  return w;
}

// Runs fn(i) for i in [0, n); execution order must not affect results.
template <typename Fn>
void for_each_node(int n, bool parallel, const std::vector<int>* order, Fn&& fn) {
  if (order) {
    for (int i : *order) fn(i);
    return;
  }
  if (parallel) {
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n; ++i) fn(i);
#else
    for (int i = 0; i < n; ++i) fn(i);
#endif
  } else {
    for (int i = 0; i < n; ++i) fn(i);
  }
}

}  // namespace

std::vector<double> gather_state(const net::Network& net,
                                 const std::vector<SourceNodeState>& sources,
                                 const std::vector<ForwardNodeState>& forwarders) {
  std::vector<double> x(net.dimension(), 0.0);
  for (size_t sp = 0; sp < sources.size(); ++sp) {
    for (size_t l = 0; l < sources[sp].x.size(); ++l)
      x[net.source_var(static_cast<int>(sp), static_cast<int>(l))] = sources[sp].x[l];
    for (int j = 0; j <= net.moment_order; ++j)
      x[net.moment_var(static_cast<int>(sp), j)] = sources[sp].m.m[j];
    x[net.aggregate_var(static_cast<int>(sp))] = sources[sp].r;
  }
  int v = net.forward_var_base;
  for (const ForwardNodeState& f : forwarders)
    for (const ForwardVar& var : f.vars) x[v++] = var.x;
  return x;
}

RunResult run(const net::Network& net, const std::vector<moments::UtilitySpec>& utilities,
              const StepSizes& ss, const RunConfig& cfg, const InitState& init) {
  if (utilities.size() != net.sources.size())
    throw std::invalid_argument("one utility spec per source required");
  if (cfg.enforce_step_validity) {
    const auto violations = validate_step_sizes(net, ss);
    if (!violations.empty())
      throw StepSizeInvalid("step sizes violate the convergence conditions (" +
                            violations.front().where + ")");
  }

  const EngineWiring wiring = build_wiring(net, ss);
  const int n_src = static_cast<int>(net.sources.size());
  const int n_fwd = static_cast<int>(net.forwarders.size());

  RunResult result;
  result.log.enabled = cfg.record_messages;
  const bool parallel = cfg.parallel && !cfg.record_messages && !cfg.shuffle_seed.has_value();

  // Initialization: x^0 (zero rates, moments of the Dirac at 0, r = xi unless
  // a custom flattened iterate is supplied), z^0 = x^0, lambda^0 = 0. When a
  // snapshot is supplied the run resumes with its x, z, u and lambda intact.
  const bool resumed = init.snapshot.has_value();
  std::vector<SourceNodeState> sources(n_src);
  std::vector<ForwardNodeState> fwd(n_fwd);
  if (resumed) {
    sources = init.snapshot->first;
    fwd = init.snapshot->second;
  } else {
    for (int sp = 0; sp < n_src; ++sp) {
      SourceNodeState& s = sources[sp];
      s.source_pos = sp;
      s.x.assign(net.source_links[sp].size(), 0.0);
      s.m = moments::dirac_moments(0.0, net.moment_order);
      s.r = utilities[sp].rate_lower;
      if (init.x0) {
        for (size_t l = 0; l < s.x.size(); ++l)
          s.x[l] = (*init.x0)[net.source_var(sp, static_cast<int>(l))];
        for (int j = 0; j <= net.moment_order; ++j) s.m.m[j] = (*init.x0)[net.moment_var(sp, j)];
        s.r = (*init.x0)[net.aggregate_var(sp)];
      }
      s.x_prev = s.x;
      s.z = s.x;
    }
    for (int fp = 0; fp < n_fwd; ++fp) {
      ForwardNodeState& f = fwd[fp];
      f.node = net.forwarders[fp];
      const int nvars = static_cast<int>(wiring.global_var[fp].size());
      f.vars.resize(nvars);
      for (int p = 0; p < nvars; ++p) {
        const int gv = wiring.global_var[fp][p];
        f.vars[p].flow = net.variables[gv].flow;
        f.vars[p].link = net.variables[gv].link;
        f.vars[p].x = init.x0 ? (*init.x0)[gv] : 0.0;
        f.vars[p].x_prev = f.vars[p].x;
        f.vars[p].z = f.vars[p].x;
      }
      f.u.assign(net.flows_at[f.node].size(), 0.0);
      f.lambda.assign(wiring.forward[fp].link_caps.size(), 0.0);
    }
  }

  MessageLog& log = result.log;
  const auto log_read = [&](int round, uint8_t stage, int reader, int owner, ReadKind kind,
                            int detail) {
    if (log.enabled) log.reads.push_back({round, stage, reader, owner, kind, detail});
  };

  const auto run_divergence = [&](int round, const std::vector<int>* order, bool par) {
    for_each_node(n_fwd, par, order, [&](int fp) {
      const auto& flows_here = net.flows_at[net.forwarders[fp]];
      DivergenceInbox inbox;
      inbox.in_z_sum.assign(flows_here.size(), 0.0);
      for (size_t fs = 0; fs < flows_here.size(); ++fs) {
        for (const RemoteRef& ref : wiring.div_in[wiring.div_offset[fp][fs]]) {
          const double zv = ref.from_source ? sources[ref.owner_pos].z[ref.slot]
                                            : fwd[ref.owner_pos].vars[ref.slot].z;
          inbox.in_z_sum[fs] += zv;
          log_read(round, 3, net.forwarders[fp], ref.owner_node, ReadKind::z_value, ref.slot);
        }
      }
      update_divergence(fwd[fp], inbox, wiring.forward[fp]);
    });
  };
  if (!resumed) run_divergence(-1, nullptr, parallel);

  result.trace.initial_x = gather_state(net, sources, fwd);

  std::vector<double> xsum(net.dimension(), 0.0);
  std::vector<geometry::SourceProjectionWork> proj_work(n_src);
  std::vector<double> src_violation(n_src, 0.0);

  std::optional<std::mt19937> shuffle_rng;
  if (cfg.shuffle_seed) shuffle_rng.emplace(*cfg.shuffle_seed);
  const auto make_order = [&](int n) -> std::optional<std::vector<int>> {
    if (!shuffle_rng) return std::nullopt;
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), *shuffle_rng);
    return order;
  };

  result.trace.iterates.reserve(cfg.iterations);
  result.trace.rows.reserve(cfg.iterations);

  for (int k = 0; k < cfg.iterations; ++k) {
    // Stage A: primal updates against the round-k snapshot.
    std::vector<SourceNodeState> new_sources(n_src);
    {
      const auto order = make_order(n_src);
      for_each_node(n_src, parallel, order ? &*order : nullptr, [&](int sp) {
        const SourceWiring& sw = wiring.sources[sp];
        SourceInbox inbox;
        inbox.neighbor_out_z_sum.assign(sw.hops.size(), 0.0);
        inbox.active.assign(sw.hops.size(), 0);
        for (size_t l = 0; l < sw.hops.size(); ++l) {
          const auto& hop = sw.hops[l];
          if (!hop.forwarding) continue;
          inbox.active[l] = 1;
          double acc = 0.0;
          for (int p : hop.out_var_positions) {
            acc += fwd[hop.fwd_pos].vars[p].z;
            log_read(k, 0, net.sources[sp], hop.hop_node, ReadKind::z_value, p);
          }
          inbox.neighbor_out_z_sum[l] = acc;
        }
        new_sources[sp] = source_update(sources[sp], inbox, ss.gamma, ss.tau_source[sp],
                                        utilities[sp], sw.caps, cfg.projection, proj_work[sp]);
        const geometry::SourcePoint q{new_sources[sp].x, new_sources[sp].m, new_sources[sp].r};
        src_violation[sp] = geometry::source_set_violation(q, utilities[sp], sw.caps);
      });
    }
    std::vector<ForwardNodeState> new_fwd(n_fwd);
    {
      const auto order = make_order(n_fwd);
      for_each_node(n_fwd, parallel, order ? &*order : nullptr, [&](int fp) {
        ForwardInbox inbox;
        inbox.downstream_u.assign(fwd[fp].vars.size(), 0.0);
        for (size_t p = 0; p < fwd[fp].vars.size(); ++p) {
          const int dpos = wiring.down_fwd_pos[fp][p];
          if (dpos < 0) continue;
          inbox.downstream_u[p] = fwd[dpos].u[wiring.down_flow_slot[fp][p]];
          log_read(k, 0, net.forwarders[fp], wiring.down_node[fp][p], ReadKind::u_value,
                   wiring.down_flow_slot[fp][p]);
        }
        new_fwd[fp] =
            forward_update(fwd[fp], inbox, wiring.forward[fp], wiring.tau_local[fp], ss.gamma);
      });
    }
    sources = std::move(new_sources);
    fwd = std::move(new_fwd);

    // Stage B: price ascent with extrapolated loads from both endpoints.
    {
      const auto order = make_order(n_fwd);
      for_each_node(n_fwd, parallel, order ? &*order : nullptr, [&](int fp) {
        const ForwardWiring& fw = wiring.forward[fp];
        PriceInbox inbox;
        inbox.neighbor_extrapolated.assign(fw.link_caps.size(), 0.0);
        for (size_t li = 0; li < fw.link_caps.size(); ++li) {
          for (const RemoteRef& ref : wiring.price_in[fp][li]) {
            double xv, xp;
            if (ref.from_source) {
              xv = sources[ref.owner_pos].x[ref.slot];
              xp = sources[ref.owner_pos].x_prev[ref.slot];
            } else {
              xv = fwd[ref.owner_pos].vars[ref.slot].x;
              xp = fwd[ref.owner_pos].vars[ref.slot].x_prev;
            }
            inbox.neighbor_extrapolated[li] += 2.0 * xv - xp;
            log_read(k, 1, net.forwarders[fp], ref.owner_node, ReadKind::x_value, ref.slot);
          }
        }
        price_update(fwd[fp], inbox, fw, wiring.kappa_local[fp]);
      });
    }

    // Stage C: z recursion, purely local.
    {
      const auto order = make_order(n_src + n_fwd);
      for_each_node(n_src + n_fwd, parallel, order ? &*order : nullptr, [&](int i) {
        if (i < n_src)
          z_update(sources[i].z, sources[i].x_prev, sources[i].x);
        else
          z_update(fwd[i - n_src]);
      });
    }

    // Stage D: republish divergences from the fresh z.
    {
      const auto order = make_order(n_fwd);
      run_divergence(k, order ? &*order : nullptr, parallel);
    }

    // Trace row on the running average.
    std::vector<double> xk = gather_state(net, sources, fwd);
    for (int i = 0; i < net.dimension(); ++i) xsum[i] += xk[i];
    const double inv = 1.0 / (k + 1);

    TraceRow row;
    row.k = k + 1;
    for (int sp = 0; sp < n_src; ++sp) {
      double acc = 0.0;
      for (int j = 0; j <= net.moment_order; ++j)
        acc += utilities[sp].coefficients[j] * xsum[net.moment_var(sp, j)] * inv;
      row.utility += acc;
      row.avg_rates.push_back(xsum[net.aggregate_var(sp)] * inv);
    }
    double cons = 0.0;
    for (const auto& crow : net.conservation_rows) {
      double v = 0.0;
      for (int idx : crow.out_vars) v += xsum[idx] * inv;
      for (int idx : crow.in_vars) v -= xsum[idx] * inv;
      cons += v * v;
    }
    row.conservation_residual = std::sqrt(cons);
    for (const auto& arow : net.capacity_rows) {
      double load = 0.0;
      for (int idx : arow.out_vars) load += xsum[idx] * inv;
      for (int idx : arow.in_vars) load += xsum[idx] * inv;
      row.avg_link_loads.push_back(load);
      row.capacity_distance += std::max(0.0, load - arow.capacity);
    }
    row.max_source_violation =
        n_src ? *std::max_element(src_violation.begin(), src_violation.end()) : 0.0;
    result.trace.rows.push_back(std::move(row));
    result.trace.iterates.push_back(std::move(xk));
    if (cfg.record_duals) {
      std::vector<double> lam;
      for (int fp = 0; fp < n_fwd; ++fp)
        for (double v : fwd[fp].lambda) lam.push_back(v);
      result.lambda_rounds.push_back(std::move(lam));
    }
  }

  result.trace.xbar.resize(net.dimension());
  if (cfg.iterations > 0) {
    const double inv = 1.0 / cfg.iterations;
    for (int i = 0; i < net.dimension(); ++i) result.trace.xbar[i] = xsum[i] * inv;
  } else {
    result.trace.xbar = result.trace.initial_x;
  }

  for (int fp = 0; fp < n_fwd; ++fp)
    for (double v : fwd[fp].lambda) result.final_lambda.push_back(v);

  // theta = gamma * B z from the final z.
  std::vector<double> zflat(net.dimension(), 0.0);
  for (int sp = 0; sp < n_src; ++sp)
    for (size_t l = 0; l < sources[sp].z.size(); ++l)
      zflat[net.source_var(sp, static_cast<int>(l))] = sources[sp].z[l];
  {
    int v = net.forward_var_base;
    for (const ForwardNodeState& f : fwd)
      for (const ForwardVar& var : f.vars) zflat[v++] = var.z;
  }
  for (const auto& crow : net.conservation_rows) {
    double acc = 0.0;
    for (int idx : crow.out_vars) acc += zflat[idx];
    for (int idx : crow.in_vars) acc -= zflat[idx];
    result.theta.push_back(ss.gamma * acc);
  }

  result.final_x = gather_state(net, sources, fwd);
  result.sources = std::move(sources);
  result.forwarders = std::move(fwd);
  return result;
}

std::vector<ResidualRow> residuals(const net::Network& net, const RunTrace& trace,
                                   const ReferencePoint& reference) {
  if (reference.lambda.size() != net.capacity_rows.size() ||
      reference.theta.size() != net.conservation_rows.size())
    throw DimensionMismatch("reference dual dimensions do not match the network");

  const double theta_norm = norm2(reference.theta);
  std::vector<ResidualRow> out;
  out.reserve(trace.rows.size());
  for (const TraceRow& row : trace.rows) {
    ResidualRow r;
    r.k = row.k;
    r.conservation = row.conservation_residual;
    r.capacity = row.capacity_distance;
    r.utility_gap = std::fabs(row.utility - reference.objective);
    double weighted = theta_norm * row.conservation_residual;
    for (size_t i = 0; i < net.capacity_rows.size(); ++i) {
      const double h = std::max(0.0, row.avg_link_loads[i] - net.capacity_rows[i].capacity);
      weighted += std::fabs(reference.lambda[i]) * h;
    }
    r.weighted_feasibility = weighted;
    out.push_back(r);
  }
  return out;
}

CertificateReport q_certificate(const net::Network& net, const StepSizes& ss, int max_dimension) {
  const int n = net.dimension();
  const int nc = static_cast<int>(net.capacity_rows.size());
  const int nb = static_cast<int>(net.conservation_rows.size());
  const int dim = n + nc + nb;
  if (dim > max_dimension)
    throw TooLarge("certificate matrix dimension " + std::to_string(dim) + " exceeds the cap");

  Matrix q(dim, dim);
  for (int v = 0; v < n; ++v) {
    const net::Variable& var = net.variables[v];
    const double tau = (var.kind == net::VarKind::forward_rate)
                           ? ss.tau_forward[v - net.forward_var_base]
                           : ss.tau_source[var.flow];
    q(v, v) = 1.0 / tau;
  }
  const Matrix a = capacity_matrix(net);
  const Matrix b = incidence_matrix(net);
  for (int r = 0; r < nc; ++r) {
    q(n + r, n + r) = 1.0 / ss.kappa[r];
    for (int c = 0; c < n; ++c)
      if (a(r, c) != 0.0) q(n + r, c) = q(c, n + r) = -a(r, c);
  }
  for (int r = 0; r < nb; ++r) {
    q(n + nc + r, n + nc + r) = 1.0 / ss.gamma;
    for (int c = 0; c < n; ++c)
      if (b(r, c) != 0.0) q(n + nc + r, c) = q(c, n + nc + r) = -b(r, c);
  }

  CertificateReport report;
  report.dimension = dim;
  const geometry::EigResult eig = geometry::eig_sym(q);
  report.min_eigenvalue = eig.values.back();
  report.psd = report.min_eigenvalue >= -1e-8;
  if (!report.psd) {
    report.witness.resize(dim);
    for (int i = 0; i < dim; ++i) report.witness[i] = eig.vectors(i, dim - 1);
  }

  // Schur-reduced condition D_tau - gamma*BtB - At Dk^-1 A on the x block.
  Matrix s(n, n);
  for (int v = 0; v < n; ++v) s(v, v) = q(v, v);
  const Matrix btb = multiply(transpose(b), b);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) s(r, c) -= ss.gamma * btb(r, c);
  for (int row = 0; row < nc; ++row)
    for (int r = 0; r < n; ++r) {
      if (a(row, r) == 0.0) continue;
      for (int c = 0; c < n; ++c)
        if (a(row, c) != 0.0) s(r, c) -= ss.kappa[row] * a(row, r) * a(row, c);
    }
  report.schur_min_eigenvalue = geometry::min_eigenvalue(s);
  return report;
}

}  // namespace numax::dpda
