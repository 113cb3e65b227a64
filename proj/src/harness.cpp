#include "numax/harness.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"

namespace numax::harness {

using nlohmann::json;

namespace {

uint64_t fnv1a(const std::string& text) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

json network_to_json(const net::NetworkSpec& spec) {
  json out;
  out["nodes"] = json::array();
  for (const auto& n : spec.nodes) {
    const char* kind = n.kind == net::NodeKind::source        ? "source"
                       : n.kind == net::NodeKind::forwarding ? "forwarding"
                                                             : "destination";
    out["nodes"].push_back({{"id", n.id}, {"kind", kind}});
  }
  out["links"] = json::array();
  for (const auto& l : spec.links)
    out["links"].push_back({{"id", l.id},
                            {"from", l.from},
                            {"to", l.to},
                            {"capacity", l.capacity},
                            {"bidirectional", l.bidirectional}});
  out["flows"] = json::array();
  for (const auto& f : spec.flows)
    out["flows"].push_back({{"id", f.id}, {"source", f.source}, {"destination", f.destination}});
  json routing = json::object();
  for (const auto& [node, per_flow] : spec.routing) {
    json entry = json::object();
    for (const auto& [flow, hops] : per_flow) entry[std::to_string(flow)] = hops;
    routing[node] = entry;
  }
  out["routing"] = routing;
  json sr = json::object();
  for (const auto& [s, links] : spec.source_routing) sr[s] = links;
  out["source_routing"] = sr;
  return out;
}

net::NetworkSpec network_from_json(const json& in, std::vector<std::string>& issues) {
  net::NetworkSpec spec;
  for (const auto& n : in.value("nodes", json::array())) {
    net::NodeSpec ns;
    ns.id = n.value("id", "");
    const std::string kind = n.value("kind", "");
    if (ns.id.empty()) issues.push_back("node without id");
    if (kind == "source")
      ns.kind = net::NodeKind::source;
    else if (kind == "forwarding")
      ns.kind = net::NodeKind::forwarding;
    else if (kind == "destination")
      ns.kind = net::NodeKind::destination;
    else
      issues.push_back("node " + ns.id + ": unknown kind '" + kind + "'");
    spec.nodes.push_back(ns);
  }
  for (const auto& l : in.value("links", json::array())) {
    net::LinkSpec ls;
    ls.id = l.value("id", "");
    if (ls.id.empty()) issues.push_back("link without id");
    if (!l.contains("from") || !l.contains("to"))
      issues.push_back("link " + ls.id + ": missing endpoint");
    ls.from = l.value("from", "");
    ls.to = l.value("to", "");
    if (!l.contains("capacity"))
      issues.push_back("link " + ls.id + ": missing capacity");
    else
      ls.capacity = l["capacity"].get<double>();
    ls.bidirectional = l.value("bidirectional", false);
    spec.links.push_back(ls);
  }
  for (const auto& f : in.value("flows", json::array())) {
    net::FlowSpec fs;
    if (!f.contains("id")) issues.push_back("flow without id");
    fs.id = f.value("id", 0);
    fs.source = f.value("source", "");
    fs.destination = f.value("destination", "");
    if (fs.source.empty() || fs.destination.empty())
      issues.push_back("flow " + std::to_string(fs.id) + ": missing endpoints");
    spec.flows.push_back(fs);
  }
  if (in.contains("routing"))
    for (const auto& [node, per_flow] : in["routing"].items())
      for (const auto& [flow, hops] : per_flow.items()) {
        std::vector<std::string> list;
        for (const auto& h : hops) list.push_back(h.get<std::string>());
        spec.routing[node][std::stoi(flow)] = list;
      }
  if (in.contains("source_routing"))
    for (const auto& [s, links] : in["source_routing"].items()) {
      std::vector<std::string> list;
      for (const auto& l : links) list.push_back(l.get<std::string>());
      spec.source_routing[s] = list;
    }
  return spec;
}

json utility_to_json(const UtilityConfig& u) {
  json out;
  out["coefficients"] = u.coefficients;
  out["order"] = u.order;
  out["rate_lower"] = u.rate_lower;
  out["rate_upper"] = u.rate_upper;
  if (u.moment_bound < 0)
    out["moment_bound"] = "auto";
  else
    out["moment_bound"] = u.moment_bound;
  return out;
}

UtilityConfig utility_from_json(const json& in, const std::string& who,
                                std::vector<std::string>& issues) {
  UtilityConfig u;
  if (!in.contains("coefficients"))
    issues.push_back("utility " + who + ": missing coefficients");
  else
    u.coefficients = in["coefficients"].get<std::vector<double>>();
  u.order = in.value("order", 6);
  u.rate_lower = in.value("rate_lower", 0.0);
  if (!in.contains("rate_upper"))
    issues.push_back("utility " + who + ": missing rate_upper");
  else
    u.rate_upper = in["rate_upper"].get<double>();
  if (!in.contains("moment_bound") || in["moment_bound"].is_string())
    u.moment_bound = -1.0;
  else
    u.moment_bound = in["moment_bound"].get<double>();
  return u;
}

}  // namespace

std::string config_to_json_text(const ExperimentConfig& cfg) {
  json out;
  if (!cfg.network_file.empty())
    out["network_file"] = cfg.network_file;
  else
    out["network"] = network_to_json(cfg.network);
  json utils;
  utils["default"] = utility_to_json(cfg.default_utility);
  for (const auto& [sid, u] : cfg.per_source_utility) utils[sid] = utility_to_json(u);
  out["utilities"] = utils;
  json steps;
  steps["mode"] = cfg.steps.auto_mode ? "auto" : "explicit";
  steps["gamma"] = cfg.steps.gamma;
  steps["margin"] = cfg.steps.margin;
  if (!cfg.steps.auto_mode) {
    steps["tau_source"] = cfg.steps.tau_source;
    steps["tau_forward"] = cfg.steps.tau_forward;
    steps["kappa"] = cfg.steps.kappa;
    steps["d_source"] = cfg.steps.d_source;
    steps["d_forward"] = cfg.steps.d_forward;
  }
  out["step_sizes"] = steps;
  out["run"] = {{"iterations", cfg.iterations},
                {"seed", cfg.seed},
                {"record_messages", cfg.record_messages},
                {"parallel", cfg.parallel},
                {"compute_reference", cfg.compute_reference},
                {"random_init", cfg.random_init},
                {"projection_tolerance", cfg.projection_tolerance},
                {"projection_max_cycles", cfg.projection_max_cycles}};
  out["baseline"] = {{"grid_step", cfg.grid_step}};
  out["output"] = {{"directory", cfg.output_dir}};
  if (cfg.capacities_reconstructed) out["annotations"] = {{"capacities_reconstructed", true}};
  return out.dump(2) + "\n";
}

ExperimentConfig config_from_json_text(const std::string& text) {
  json in;
  try {
    in = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(e.what());
  }

  ExperimentConfig cfg;
  std::vector<std::string> issues;
  try {
    if (in.contains("network_file")) cfg.network_file = in["network_file"].get<std::string>();
    if (in.contains("network")) cfg.network = network_from_json(in["network"], issues);
    if (!in.contains("network") && cfg.network_file.empty())
      issues.push_back("config: neither network nor network_file present");

    if (!in.contains("utilities") || !in["utilities"].contains("default"))
      issues.push_back("config: utilities.default is required");
    else {
      cfg.default_utility = utility_from_json(in["utilities"]["default"], "default", issues);
      for (const auto& [key, val] : in["utilities"].items())
        if (key != "default") cfg.per_source_utility[key] = utility_from_json(val, key, issues);
    }

    if (in.contains("step_sizes")) {
      const json& s = in["step_sizes"];
      cfg.steps.auto_mode = s.value("mode", "auto") == "auto";
      cfg.steps.gamma = s.value("gamma", 0.1);
      cfg.steps.margin = s.value("margin", 0.9);
      if (!cfg.steps.auto_mode) {
        cfg.steps.tau_source = s.value("tau_source", std::vector<double>{});
        cfg.steps.tau_forward = s.value("tau_forward", std::vector<double>{});
        cfg.steps.kappa = s.value("kappa", std::vector<double>{});
        cfg.steps.d_source = s.value("d_source", std::vector<double>{});
        cfg.steps.d_forward = s.value("d_forward", std::vector<double>{});
      }
    }
    if (in.contains("run")) {
      const json& r = in["run"];
      cfg.iterations = r.value("iterations", 1000);
      cfg.seed = r.value("seed", 0ull);
      cfg.record_messages = r.value("record_messages", false);
      cfg.parallel = r.value("parallel", false);
      cfg.compute_reference = r.value("compute_reference", true);
      cfg.random_init = r.value("random_init", false);
      cfg.projection_tolerance = r.value("projection_tolerance", 1e-8);
      cfg.projection_max_cycles = r.value("projection_max_cycles", 2000);
    }
    if (in.contains("baseline")) cfg.grid_step = in["baseline"].value("grid_step", 0.05);
    if (in.contains("output")) cfg.output_dir = in["output"].value("directory", "out");
    if (in.contains("annotations"))
      cfg.capacities_reconstructed = in["annotations"].value("capacities_reconstructed", false);
  } catch (const json::exception& e) {
    throw ParseError(e.what());
  }

  if (cfg.iterations < 1) issues.push_back("run.iterations must be at least 1");
  if (!issues.empty()) throw ValidationError(std::move(issues));
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open config file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  ExperimentConfig cfg = config_from_json_text(ss.str());
  if (!cfg.network_file.empty()) {
    const auto dir = std::filesystem::path(path).parent_path();
    const auto netpath = dir / cfg.network_file;
    std::ifstream nf(netpath);
    if (!nf) throw ValidationError({"network_file does not exist: " + netpath.string()});
    std::stringstream ns;
    ns << nf.rdbuf();
    json nj;
    try {
      nj = json::parse(ns.str());
    } catch (const json::parse_error& e) {
      throw ParseError(e.what());
    }
    std::vector<std::string> issues;
    cfg.network = network_from_json(nj, issues);
    if (!issues.empty()) throw ValidationError(std::move(issues));
  }
  return cfg;
}

void write_config(const ExperimentConfig& cfg, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ParseError("cannot write config file " + path);
  f << config_to_json_text(cfg);
}

ExperimentConfig builtin_fig2_scenario() {
  using namespace net;
  ExperimentConfig cfg;
  NetworkSpec& spec = cfg.network;

  for (int i = 1; i <= 8; ++i) spec.nodes.push_back({"s" + std::to_string(i), NodeKind::source});
  for (int i = 1; i <= 8; ++i)
    spec.nodes.push_back({"b" + std::to_string(i), NodeKind::forwarding});
  for (int i = 1; i <= 8; ++i)
    spec.nodes.push_back({"d" + std::to_string(i), NodeKind::destination});

  // Link capacities are reconstructed (the published figure is graphical);
  // every acceptance check on this scenario is property-based.
  const double cap = 10.0;
  const auto link = [&](const std::string& id, const std::string& a, const std::string& b,
                        bool bidir) { spec.links.push_back({id, a, b, cap, bidir}); };
  for (int i : {1, 2, 3, 4, 7, 8}) {
    const std::string n = std::to_string(i);
    link("as" + n, "s" + n, "b1", false);
    spec.source_routing["s" + n] = {"as" + n};
  }
  for (int i : {5, 6}) {
    const std::string n = std::to_string(i);
    link("as" + n + "a", "s" + n, "b2", false);
    link("as" + n + "b", "s" + n, "b3", false);
    spec.source_routing["s" + n] = {"as" + n + "a", "as" + n + "b"};
  }
  link("i12", "b1", "b2", true);
  link("i17", "b1", "b7", false);
  link("i27", "b2", "b7", true);
  link("i28", "b2", "b8", true);
  link("i34", "b3", "b4", false);
  link("i38", "b3", "b8", true);
  link("i48", "b4", "b8", true);
  link("i57", "b5", "b7", true);
  link("i76", "b7", "b6", false);
  link("i78", "b7", "b8", true);
  link("i85", "b8", "b5", false);
  link("e1", "b4", "d1", false);
  link("e2", "b5", "d2", false);
  link("e3", "b4", "d3", false);
  link("e4", "b5", "d4", false);
  link("e5", "b6", "d5", false);
  link("e6", "b6", "d6", false);
  link("e7", "b2", "d7", false);
  link("e8", "b4", "d8", false);

  for (int i = 1; i <= 8; ++i)
    spec.flows.push_back({i, "s" + std::to_string(i), "d" + std::to_string(i)});

  auto& routing = spec.routing;
  routing["b1"][1] = {"b2", "b7"};
  routing["b1"][2] = {"b2", "b7"};
  routing["b1"][3] = {"b2", "b7"};
  routing["b1"][4] = {"b2", "b7"};
  routing["b1"][5] = {"b7"};
  routing["b1"][6] = {"b7"};
  routing["b1"][7] = {"b2", "b7"};
  routing["b1"][8] = {"b2", "b7"};
  routing["b2"][1] = {"b7", "b8"};
  routing["b2"][2] = {"b7", "b8"};
  routing["b2"][3] = {"b7", "b8"};
  routing["b2"][4] = {"b7", "b8"};
  routing["b2"][5] = {"b1", "b7", "b8"};
  routing["b2"][6] = {"b1", "b7", "b8"};
  routing["b2"][7] = {"d7"};
  routing["b2"][8] = {"b7", "b8"};
  routing["b3"][1] = {"b4"};
  routing["b3"][3] = {"b4"};
  routing["b3"][5] = {"b4", "b8"};
  routing["b3"][6] = {"b4", "b8"};
  routing["b3"][8] = {"b4"};
  routing["b4"][1] = {"d1"};
  routing["b4"][3] = {"d3"};
  routing["b4"][5] = {"b8"};
  routing["b4"][6] = {"b8"};
  routing["b4"][8] = {"d8"};
  routing["b5"][2] = {"d2"};
  routing["b5"][4] = {"d4"};
  routing["b5"][5] = {"b7"};
  routing["b5"][6] = {"b7"};
  routing["b6"][5] = {"d5"};
  routing["b6"][6] = {"d6"};
  routing["b7"][1] = {"b8"};
  routing["b7"][2] = {"b5"};
  routing["b7"][3] = {"b8"};
  routing["b7"][4] = {"b5"};
  routing["b7"][5] = {"b6"};
  routing["b7"][6] = {"b6"};
  routing["b7"][7] = {"b2", "b8"};
  routing["b7"][8] = {"b8"};
  routing["b8"][1] = {"b3", "b4"};
  routing["b8"][2] = {"b5", "b7"};
  routing["b8"][3] = {"b3", "b4"};
  routing["b8"][4] = {"b5", "b7"};
  routing["b8"][5] = {"b5", "b7"};
  routing["b8"][6] = {"b5", "b7"};
  routing["b8"][7] = {"b2"};
  routing["b8"][8] = {"b3", "b4"};

  cfg.default_utility.coefficients = {0.0, 1.763, -20.718, 88.568, -169.102, 145.167, -44.677};
  cfg.default_utility.order = 6;
  cfg.default_utility.rate_lower = 0.0;
  cfg.default_utility.rate_upper = 10.0;
  cfg.default_utility.moment_bound = -1.0;  // auto

  cfg.steps.auto_mode = true;
  cfg.steps.gamma = 0.1;
  cfg.steps.margin = 0.9;
  cfg.iterations = 2000;
  cfg.compute_reference = false;  // property-focused scenario
  cfg.capacities_reconstructed = true;
  cfg.output_dir = "out-fig2";
  return cfg;
}

BuiltExperiment build_experiment(const ExperimentConfig& cfg) {
  std::vector<std::string> issues;

  const auto resolve = [&](const std::string& sid) -> const UtilityConfig& {
    const auto it = cfg.per_source_utility.find(sid);
    return it != cfg.per_source_utility.end() ? it->second : cfg.default_utility;
  };

  const int order = cfg.default_utility.order;
  for (const auto& [sid, u] : cfg.per_source_utility)
    if (u.order != order)
      issues.push_back("utility " + sid + ": all sources must share one moment order");
  if (!issues.empty()) throw ValidationError(std::move(issues));

  BuiltExperiment be{net::build_network(cfg.network, order), {}, {}};

  for (size_t sp = 0; sp < be.network.sources.size(); ++sp) {
    const std::string& sid = be.network.nodes[be.network.sources[sp]].id;
    const UtilityConfig& uc = resolve(sid);
    moments::UtilitySpec u;
    u.coefficients = uc.coefficients;
    u.order = uc.order;
    u.rate_lower = uc.rate_lower;
    u.rate_upper = uc.rate_upper;
    u.moment_bound = uc.moment_bound < 0
                         ? moments::UtilitySpec::auto_moment_bound(uc.rate_upper, uc.order)
                         : uc.moment_bound;
    try {
      u.validate();
    } catch (const std::exception& e) {
      issues.push_back("utility for " + sid + ": " + e.what());
    }
    be.utilities.push_back(std::move(u));
  }
  if (!issues.empty()) throw ValidationError(std::move(issues));

  if (cfg.steps.auto_mode) {
    be.steps = dpda::auto_step_sizes(be.network, cfg.steps.gamma, cfg.steps.margin);
  } else {
    be.steps.gamma = cfg.steps.gamma;
    be.steps.tau_source = cfg.steps.tau_source;
    be.steps.tau_forward = cfg.steps.tau_forward;
    be.steps.kappa = cfg.steps.kappa;
    be.steps.d_source = cfg.steps.d_source;
    be.steps.d_forward = cfg.steps.d_forward;
    const size_t nf = be.network.dimension() - be.network.forward_var_base;
    if (be.steps.tau_source.size() != be.network.sources.size() ||
        be.steps.tau_forward.size() != nf ||
        be.steps.kappa.size() != be.network.capacity_rows.size() ||
        be.steps.d_source.size() != be.network.sources.size() || be.steps.d_forward.size() != nf)
      throw ValidationError({"explicit step-size arrays have wrong lengths"});
  }
  const auto violations = dpda::validate_step_sizes(be.network, be.steps);
  if (!violations.empty()) {
    std::vector<std::string> list;
    for (const auto& v : violations) list.push_back("step sizes: " + v.where);
    throw ValidationError(std::move(list));
  }
  return be;
}

double fit_rate(std::span<const double> ks, std::span<const double> residuals, double burn_in) {
  if (ks.size() != residuals.size() || ks.empty())
    throw InsufficientData("empty or mismatched residual series");
  const double kmax = ks.back();
  std::vector<double> lx, ly;
  int post_burn_in = 0;
  for (size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] <= burn_in * kmax) continue;
    ++post_burn_in;
    if (residuals[i] > 0.0) {
      lx.push_back(std::log(ks[i]));
      ly.push_back(std::log(residuals[i]));
    }
  }
  if (lx.size() < 20) {
    if (post_burn_in >= 20 && lx.empty())
      throw NonPositiveResiduals("residuals are nonpositive after burn-in: already converged");
    throw InsufficientData("need at least 20 positive post-burn-in residuals");
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(lx.size());
  for (size_t i = 0; i < lx.size(); ++i) {
    sx += lx[i];
    sy += ly[i];
    sxx += lx[i] * lx[i];
    sxy += lx[i] * ly[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

double fit_rate(const dpda::RunTrace& trace, double burn_in) {
  std::vector<double> ks, res;
  for (const auto& row : trace.rows) {
    ks.push_back(row.k);
    res.push_back(row.conservation_residual + row.capacity_distance);
  }
  return fit_rate(ks, res, burn_in);
}

void write_trace_csv(const std::string& path, const net::Network& net,
                     const dpda::RunTrace& trace) {
  std::ofstream f(path);
  if (!f) throw ParseError("cannot write trace file " + path);
  f << "k,utility,conservation_residual,capacity_distance";
  for (size_t sp = 0; sp < net.sources.size(); ++sp)
    f << ",rbar_" << net.nodes[net.sources[sp]].id;
  for (const auto& row : net.capacity_rows)
    f << ",load_" << net.nodes[row.node].id << "_" << net.links[row.link].id;
  for (int i = 0; i < net.dimension(); ++i) f << ",xbar_" << i;
  f << "\n";

  std::vector<double> xsum(net.dimension(), 0.0);
  for (size_t t = 0; t < trace.rows.size(); ++t) {
    const auto& row = trace.rows[t];
    for (int i = 0; i < net.dimension(); ++i) xsum[i] += trace.iterates[t][i];
    const double inv = 1.0 / row.k;
    f << row.k << "," << format_double(row.utility) << ","
      << format_double(row.conservation_residual) << "," << format_double(row.capacity_distance);
    for (double r : row.avg_rates) f << "," << format_double(r);
    for (double l : row.avg_link_loads) f << "," << format_double(l);
    for (int i = 0; i < net.dimension(); ++i) f << "," << format_double(xsum[i] * inv);
    f << "\n";
  }
}

TraceData read_trace_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot read trace file " + path);
  TraceData data;
  std::string line;
  if (!std::getline(f, line)) throw ParseError("empty trace file");
  std::stringstream hs(line);
  std::string cell;
  while (std::getline(hs, cell, ',')) data.header.push_back(cell);
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ls(line);
    while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
    data.rows.push_back(std::move(row));
  }
  return data;
}

int TraceData::column(const std::string& name) const {
  for (size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

ExperimentSummary run_experiment(const ExperimentConfig& cfg) {
  const BuiltExperiment be = build_experiment(cfg);

  dpda::RunConfig rc;
  rc.iterations = cfg.iterations;
  rc.record_messages = cfg.record_messages;
  rc.parallel = cfg.parallel;
  rc.projection.tolerance = cfg.projection_tolerance;
  rc.projection.max_cycles = cfg.projection_max_cycles;

  dpda::InitState init;
  if (cfg.random_init) {
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::vector<double> x0(be.network.dimension(), 0.0);
    for (int v = 0; v < be.network.dimension(); ++v)
      if (be.network.variables[v].kind == net::VarKind::source_rate ||
          be.network.variables[v].kind == net::VarKind::forward_rate)
        x0[v] = uni(rng);
    for (size_t sp = 0; sp < be.network.sources.size(); ++sp) {
      const auto d = moments::dirac_moments(0.0, be.network.moment_order);
      for (int j = 0; j <= be.network.moment_order; ++j)
        x0[be.network.moment_var(static_cast<int>(sp), j)] = d.m[j];
      x0[be.network.aggregate_var(static_cast<int>(sp))] = be.utilities[sp].rate_lower;
    }
    init.x0 = std::move(x0);
  }

  const dpda::RunResult rr = dpda::run(be.network, be.utilities, be.steps, rc, init);

  ExperimentSummary summary;
  summary.iterations = cfg.iterations;
  if (!rr.trace.rows.empty()) {
    const auto& last = rr.trace.rows.back();
    summary.final_utility = last.utility;
    summary.final_conservation = last.conservation_residual;
    summary.final_capacity = last.capacity_distance;
  }

  if (cfg.compute_reference) {
    baselines::CentralizedConfig cc;
    cc.gamma = cfg.steps.gamma;
    cc.margin = cfg.steps.margin;
    cc.parallel = cfg.parallel;
    const baselines::ReferenceSolution ref = baselines::centralized_solve(be.network, be.utilities, cc);
    summary.reference_objective = ref.point.objective;
    summary.utility_gap = std::fabs(summary.final_utility - ref.point.objective);
    const auto rows = dpda::residuals(be.network, rr.trace, ref.point);
    std::vector<double> ks, series;
    for (const auto& r : rows) {
      ks.push_back(r.k);
      series.push_back(r.weighted_feasibility + r.utility_gap);
    }
    try {
      summary.fitted_exponent = fit_rate(ks, series, 0.1);
    } catch (const std::exception&) {
    }
  } else {
    try {
      summary.fitted_exponent = fit_rate(rr.trace, 0.1);
    } catch (const std::exception&) {
    }
  }

  std::filesystem::create_directories(cfg.output_dir);
  summary.trace_path = cfg.output_dir + "/trace.csv";
  summary.meta_path = cfg.output_dir + "/run_meta.json";
  write_trace_csv(summary.trace_path, be.network, rr.trace);

  const std::string cfg_text = config_to_json_text(cfg);
  json meta;
  meta["config_hash"] = fnv1a(cfg_text);
  meta["seed"] = cfg.seed;
  meta["iterations"] = cfg.iterations;
  meta["dimension"] = be.network.dimension();
  meta["generator"] = "numax 0.1.0";
  meta["capacities_reconstructed"] = cfg.capacities_reconstructed;
  if (cfg.compute_reference && !std::isnan(summary.reference_objective))
    meta["reference_objective"] = summary.reference_objective;
  std::ofstream mf(summary.meta_path);
  mf << meta.dump(2) << "\n";
  return summary;
}

}  // namespace numax::harness
