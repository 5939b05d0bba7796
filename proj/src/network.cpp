// SPDX-License-Identifier: Apache-2.0
#include "wlfreq/network.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>
#include <queue>
#include <random>

#include "wlfreq/csv.hpp"
#include "wlfreq/error.hpp"

namespace wlfreq {

namespace {

Edge normalized(NodeId a, NodeId b)
{
  return a < b ? Edge{a, b} : Edge{b, a};
}

std::string edge_name(NodeId a, NodeId b)
{
  return std::to_string(a) + "-" + std::to_string(b);
}

std::uint64_t splitmix64(std::uint64_t z)
{
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace

// --- Topology ---------------------------------------------------------------

Topology::Topology(std::vector<NodeId> nodes, const std::vector<Edge>& edges)
    : nodes_(std::move(nodes))
{
  std::set<Edge> unique;
  for (const auto& [a, b] : edges)
    unique.insert(normalized(a, b));
  edges_.assign(unique.begin(), unique.end());
  for (NodeId n : nodes_)
    adjacency_[n];
  for (const auto& [a, b] : edges_) {
    if (a == b)
      continue;
    adjacency_[a].push_back(b);
    adjacency_[b].push_back(a);
  }
  for (auto& [id, nbrs] : adjacency_)
    std::sort(nbrs.begin(), nbrs.end());
}

bool Topology::has_node(NodeId id) const
{
  return std::find(nodes_.begin(), nodes_.end(), id) != nodes_.end();
}

bool Topology::has_edge(NodeId a, NodeId b) const
{
  return std::binary_search(edges_.begin(), edges_.end(), normalized(a, b));
}

const std::vector<NodeId>& Topology::neighbors(NodeId id) const
{
  auto it = adjacency_.find(id);
  if (it == adjacency_.end())
    throw TopologyError("unknown node " + std::to_string(id));
  return it->second;
}

std::vector<NodeId> Topology::closed_neighborhood(NodeId id) const
{
  std::vector<NodeId> out = neighbors(id);
  out.insert(std::lower_bound(out.begin(), out.end(), id), id);
  return out;
}

std::size_t Topology::index_of(NodeId id) const
{
  auto it = std::find(nodes_.begin(), nodes_.end(), id);
  if (it == nodes_.end())
    throw TopologyError("unknown node " + std::to_string(id));
  return static_cast<std::size_t>(it - nodes_.begin());
}

bool Topology::connected() const
{
  if (nodes_.empty())
    return true;
  std::set<NodeId> seen{nodes_.front()};
  std::queue<NodeId> q;
  q.push(nodes_.front());
  while (!q.empty()) {
    const NodeId n = q.front();
    q.pop();
    for (NodeId m : adjacency_.at(n))
      if (seen.insert(m).second)
        q.push(m);
  }
  return seen.size() == std::set<NodeId>(nodes_.begin(), nodes_.end()).size();
}

std::vector<std::string> Topology::validate() const
{
  std::vector<std::string> out;
  std::set<NodeId> ids;
  for (NodeId n : nodes_)
    if (!ids.insert(n).second)
      out.push_back("topology.nodes: duplicate node id " + std::to_string(n));
  for (const auto& [a, b] : edges_) {
    if (a == b)
      out.push_back("topology.edges: self-loop on node " + std::to_string(a));
    if (!ids.count(a) || !ids.count(b))
      out.push_back("topology.edges: edge " + edge_name(a, b) + " references an unknown node");
  }
  if (out.empty() && !connected())
    out.push_back("warning: topology is not connected");
  return out;
}

Topology Topology::reference7()
{
  return Topology({1, 2, 3, 4, 5, 6, 7},
                  {{1, 4}, {2, 4}, {3, 4}, {5, 6}, {7, 6}, {1, 2}, {3, 5}, {2, 7}});
}

// --- Bridges ----------------------------------------------------------------

std::vector<std::string> check_bridges(const Topology& t, const BridgeAssignment& b)
{
  std::vector<std::string> out;
  for (NodeId id : b.bridges)
    if (!t.has_node(id))
      out.push_back("bridges: node " + std::to_string(id) + " is not in the topology");
  for (const auto& [u, v] : t.edges())
    if (b.is_bridge(u) && b.is_bridge(v))
      out.push_back("bridges: edge " + edge_name(u, v) + " joins two bridge nodes");
  for (NodeId n : t.nodes())
    if (!b.is_bridge(n) && bridge_neighbors(t, b, n).empty())
      out.push_back("bridges: non-bridge node " + std::to_string(n) +
                    " has no bridge in its neighbourhood");
  return out;
}

std::vector<NodeId> bridge_neighbors(const Topology& t, const BridgeAssignment& b, NodeId m)
{
  std::vector<NodeId> out;
  for (NodeId n : t.neighbors(m))
    if (b.is_bridge(n))
      out.push_back(n);
  return out;
}

BridgeAssignment select_bridges(const Topology& t, std::uint64_t seed)
{
  for (NodeId n : t.nodes())
    if (t.degree(n) == 0)
      throw TopologyError("cannot assign bridges: node " + std::to_string(n) + " is isolated");

  std::vector<NodeId> order = t.nodes();
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::stable_sort(order.begin(), order.end(),
                   [&](NodeId a, NodeId b) { return t.degree(a) > t.degree(b); });

  BridgeAssignment out;
  for (NodeId n : order) {
    const auto& nbrs = t.neighbors(n);
    if (std::none_of(nbrs.begin(), nbrs.end(), [&](NodeId m) { return out.is_bridge(m); }))
      out.bridges.insert(n);
  }
  // A maximal independent set already dominates; the repair pass makes the
  // guarantee explicit.
  for (NodeId n : order)
    if (!out.is_bridge(n) && bridge_neighbors(t, out, n).empty())
      out.bridges.insert(n);

  if (auto problems = check_bridges(t, out); !problems.empty())
    throw TopologyError(problems.front());
  return out;
}

// --- Weights and combiners --------------------------------------------------

DiffusionWeights DiffusionWeights::uniform(const Topology& t, const BridgeAssignment& b)
{
  DiffusionWeights w;
  for (NodeId n : t.nodes()) {
    const auto closed = t.closed_neighborhood(n);
    WeightRow conv;
    for (NodeId l : closed)
      conv[l] = 1.0 / static_cast<double>(closed.size());
    w.conventional[n] = conv;
    if (b.is_bridge(n)) {
      w.beta[n] = conv;
    } else {
      const auto bn = bridge_neighbors(t, b, n);
      WeightRow row;
      for (NodeId l : bn)
        row[l] = 1.0 / static_cast<double>(bn.size());
      w.gamma[n] = row;
    }
  }
  return w;
}

std::vector<std::string> DiffusionWeights::validate(const Topology& t,
                                                    const BridgeAssignment& b) const
{
  std::vector<std::string> out;
  auto check_row = [&](const std::string& path, const WeightRow& row,
                       const std::vector<NodeId>& allowed) {
    double sum = 0.0;
    for (const auto& [l, v] : row) {
      if (std::find(allowed.begin(), allowed.end(), l) == allowed.end())
        out.push_back(path + ": node " + std::to_string(l) + " is outside the allowed set");
      if (!(v >= 0.0))
        out.push_back(path + ": weight for node " + std::to_string(l) + " is negative");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      out.push_back(path + ": weights sum to " + format_double(sum) + ", expected 1");
  };
  for (NodeId n : t.nodes()) {
    const std::string id = std::to_string(n);
    if (b.is_bridge(n)) {
      auto it = beta.find(n);
      if (it == beta.end())
        out.push_back("weights.beta." + id + ": missing row for bridge node");
      else
        check_row("weights.beta." + id, it->second, t.closed_neighborhood(n));
    } else if (!b.bridges.empty()) {
      auto it = gamma.find(n);
      if (it == gamma.end())
        out.push_back("weights.gamma." + id + ": missing row for non-bridge node");
      else
        check_row("weights.gamma." + id, it->second, bridge_neighbors(t, b, n));
    }
    if (auto it = conventional.find(n); it != conventional.end())
      check_row("weights.conventional." + id, it->second, t.closed_neighborhood(n));
  }
  return out;
}

AugmentedVector combine(NodeId dst, const WeightRow& row,
                        const std::map<NodeId, AugmentedVector>& estimates,
                        MissingPolicy policy)
{
  CVec acc;
  double total = 0.0;
  for (const auto& [l, w] : row) {
    auto it = estimates.find(l);
    if (it == estimates.end()) {
      if (policy == MissingPolicy::error)
        throw MissingMessageError("node " + std::to_string(dst) + " has no estimate from node " +
                                      std::to_string(l),
                                  l, dst);
      continue;
    }
    if (acc.size() == 0)
      acc = CVec::Zero(it->second.size());
    acc += w * it->second.top();
    total += w;
  }
  if (acc.size() == 0 || !(total > 0.0))
    throw MissingMessageError(
        "node " + std::to_string(dst) + " received no estimates to combine", -1, dst);
  if (policy == MissingPolicy::renormalize)
    acc /= total;
  return AugmentedVector(std::move(acc));
}

AugmentedVector bridge_diffuse(NodeId i, const std::map<NodeId, AugmentedVector>& estimates,
                               const DiffusionWeights& w, MissingPolicy policy)
{
  auto it = w.beta.find(i);
  if (it == w.beta.end())
    throw Error("node " + std::to_string(i) + " has no bridge weights");
  return combine(i, it->second, estimates, policy);
}

AugmentedVector nonbridge_diffuse(NodeId m,
                                  const std::map<NodeId, AugmentedVector>& bridge_estimates,
                                  const DiffusionWeights& w, MissingPolicy policy)
{
  auto it = w.gamma.find(m);
  if (it == w.gamma.end())
    throw Error("node " + std::to_string(m) + " has no non-bridge weights");
  return combine(m, it->second, bridge_estimates, policy);
}

std::string to_string(DiffusionStrategy s)
{
  switch (s) {
  case DiffusionStrategy::bridge: return "bridge";
  case DiffusionStrategy::conventional: return "conventional";
  case DiffusionStrategy::none: return "none";
  }
  return "unknown";
}

std::string to_string(DistributedMode m)
{
  return m == DistributedMode::dfe ? "dfe" : "distributed-acekf";
}

std::optional<DiffusionStrategy> parse_strategy(const std::string& s)
{
  if (s == "bridge") return DiffusionStrategy::bridge;
  if (s == "conventional") return DiffusionStrategy::conventional;
  if (s == "none") return DiffusionStrategy::none;
  return std::nullopt;
}

CombinationOperator combination_operator(const Topology& t, const BridgeAssignment& b,
                                         const DiffusionWeights& w, DiffusionStrategy s)
{
  const auto n = static_cast<Eigen::Index>(t.size());
  CombinationOperator op;
  op.order = t.nodes();
  op.first = Eigen::MatrixXd::Identity(n, n);
  op.second = Eigen::MatrixXd::Identity(n, n);
  auto fill = [&](Eigen::MatrixXd& m, NodeId row_node, const WeightRow& row) {
    const auto r = static_cast<Eigen::Index>(t.index_of(row_node));
    m.row(r).setZero();
    for (const auto& [l, v] : row)
      m(r, static_cast<Eigen::Index>(t.index_of(l))) = v;
  };
  switch (s) {
  case DiffusionStrategy::bridge:
    for (NodeId id : t.nodes()) {
      if (b.is_bridge(id))
        fill(op.first, id, w.beta.at(id));
      else
        fill(op.second, id, w.gamma.at(id));
    }
    break;
  case DiffusionStrategy::conventional:
    for (NodeId id : t.nodes())
      fill(op.first, id, w.conventional.at(id));
    break;
  case DiffusionStrategy::none:
    break;
  }
  return op;
}

void write_message_log_csv(std::ostream& os, const std::vector<Message>& log)
{
  os << "k,phase,src,dst,payload_re,payload_im\n";
  for (const auto& m : log)
    os << m.k << ',' << m.phase << ',' << m.src << ',' << m.dst << ','
       << format_double(m.payload.real()) << ',' << format_double(m.payload.imag()) << '\n';
}

// --- Simulation -------------------------------------------------------------

std::uint64_t node_seed(std::uint64_t seed, NodeId id)
{
  return splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(id) + 1));
}

std::vector<NodeRuntime> init_nodes(const DistributedContext& ctx,
                                    const std::map<NodeId, ClarkeSample>& first_obs,
                                    const FilterTuning& tuning)
{
  std::vector<NodeRuntime> nodes;
  for (NodeId id : ctx.topology.nodes()) {
    auto it = first_obs.find(id);
    if (it == first_obs.end())
      throw ConfigError("node " + std::to_string(id) + " has no observations");
    NodeRuntime rt;
    rt.id = id;
    rt.aux = initial_state(ctx.aux_model, it->second.v, tuning);
    rt.shared = initial_state(ctx.shared_model, it->second.v, tuning);
    rt.diffused = ctx.mode == DistributedMode::dfe ? rt.shared.x : rt.aux.x;
    nodes.push_back(std::move(rt));
  }
  return nodes;
}

void dfe_tick(std::vector<NodeRuntime>& nodes, const DistributedContext& ctx,
              const std::map<NodeId, ClarkeSample>& observations, long k, TickLog* log)
{
  const auto& topo = ctx.topology;
  const MissingPolicy policy =
      ctx.failed_links.empty() ? MissingPolicy::error : MissingPolicy::renormalize;
  auto link_up = [&](NodeId a, NodeId b) { return !ctx.failed_links.count(normalized(a, b)); };
  auto send = [&](const char* phase, NodeId src, NodeId dst, const AugmentedVector& x) {
    if (log)
      log->messages.push_back({k, phase, src, dst, x[0]});
  };

  // Local filters.
  std::map<NodeId, AugmentedVector> posterior;
  for (auto& node : nodes) {
    auto obs = observations.find(node.id);
    if (obs == observations.end())
      throw Error("node " + std::to_string(node.id) + ": no observation at tick " +
                  std::to_string(k));
    CVec v(1);
    v << obs->second.v;
    const AugmentedVector y(v);
    StepRecord rec;
    try {
      if (ctx.mode == DistributedMode::dfe) {
        // H uses the sequence components from the previous tick, which the
        // phase increment maps onto the current observation.
        const cd vp_prev = node.aux.x[1];
        const cd vm_prev = node.aux.x[2];
        node.aux = acekf_step(ctx.aux_model, node.aux, y);
        CMat h11(1, 1), h12(1, 1);
        h11 << vp_prev;
        h12 << vm_prev;
        node.shared = acekf_step(ctx.shared_model, node.shared, y, AugmentedMatrix(h11, h12),
                                 &rec);
        posterior[node.id] = node.shared.x;
      } else {
        node.aux = acekf_step(ctx.aux_model, node.aux, y, &rec);
        posterior[node.id] = node.aux.x;
      }
    } catch (const FilterDegenerateError& e) {
      throw FilterDegenerateError("node " + std::to_string(node.id) + ": " + e.what(), e.tick());
    } catch (const Error& e) {
      throw Error("node " + std::to_string(node.id) + ": " + e.what());
    }
    if (log)
      log->records[node.id] = std::move(rec);
  }

  // Diffusion.
  std::map<NodeId, AugmentedVector> combined;
  switch (ctx.strategy) {
  case DiffusionStrategy::none:
    combined = posterior;
    break;

  case DiffusionStrategy::conventional:
    for (NodeId id : topo.nodes()) {
      std::map<NodeId, AugmentedVector> inbox{{id, posterior.at(id)}};
      for (NodeId l : topo.neighbors(id))
        if (link_up(l, id)) {
          send("neighbor", l, id, posterior.at(l));
          inbox.emplace(l, posterior.at(l));
        }
      combined[id] = combine(id, ctx.weights.conventional.at(id), inbox, policy);
    }
    break;

  case DiffusionStrategy::bridge: {
    std::map<NodeId, std::map<NodeId, AugmentedVector>> bridge_inbox;
    for (NodeId id : topo.nodes()) {
      if (ctx.bridges.is_bridge(id)) {
        bridge_inbox[id].emplace(id, posterior.at(id));
        continue;
      }
      for (NodeId b : bridge_neighbors(topo, ctx.bridges, id))
        if (link_up(id, b)) {
          send("to_bridge", id, b, posterior.at(id));
          bridge_inbox[b].emplace(id, posterior.at(id));
        }
    }
    std::map<NodeId, AugmentedVector> bridge_estimate;
    for (NodeId b : ctx.bridges.bridges)
      bridge_estimate[b] = bridge_diffuse(b, bridge_inbox.at(b), ctx.weights, policy);

    for (NodeId id : topo.nodes()) {
      if (ctx.bridges.is_bridge(id)) {
        combined[id] = bridge_estimate.at(id);
        continue;
      }
      std::map<NodeId, AugmentedVector> inbox;
      for (NodeId b : bridge_neighbors(topo, ctx.bridges, id))
        if (link_up(id, b)) {
          send("from_bridge", b, id, bridge_estimate.at(b));
          inbox.emplace(b, bridge_estimate.at(b));
        }
      // Cut off from every bridge: keep the local estimate for this tick.
      combined[id] = inbox.empty() ? posterior.at(id)
                                   : nonbridge_diffuse(id, inbox, ctx.weights, policy);
    }
    break;
  }
  }

  // Re-seed.
  for (auto& node : nodes) {
    node.diffused = combined.at(node.id);
    if (ctx.mode == DistributedMode::dfe) {
      node.shared.x = node.diffused;
      node.aux.x.top()(0) = node.diffused[0];
    } else {
      node.aux.x = node.diffused;
    }
  }
  if (log)
    log->posteriors = std::move(posterior);
}

DistributedResult run_distributed_samples(
    const Topology& t, const std::map<NodeId, std::vector<ClarkeSample>>& samples, double fs,
    const DistributedConfig& cfg)
{
  for (const auto& p : t.validate())
    if (p.rfind("warning:", 0) != 0)
      throw ConfigError(p);
  std::size_t n_ticks = 0;
  for (NodeId id : t.nodes()) {
    auto it = samples.find(id);
    if (it == samples.end())
      throw ConfigError("node " + std::to_string(id) + " has no scenario");
    if (n_ticks == 0)
      n_ticks = it->second.size();
    if (it->second.size() != n_ticks || n_ticks == 0)
      throw ConfigError("node " + std::to_string(id) + ": sample count differs from other nodes");
  }

  DistributedContext ctx;
  ctx.topology = t;
  ctx.bridges = cfg.bridges;
  ctx.strategy = cfg.strategy;
  ctx.mode = cfg.mode;
  ctx.failed_links.clear();
  for (const auto& [a, b] : cfg.failed_links)
    ctx.failed_links.insert(normalized(a, b));
  if (cfg.strategy == DiffusionStrategy::bridge)
    if (auto problems = check_bridges(t, cfg.bridges); !problems.empty())
      throw ConfigError(problems.front());
  ctx.weights = cfg.weights ? *cfg.weights : DiffusionWeights::uniform(t, cfg.bridges);
  if (cfg.weights && cfg.strategy == DiffusionStrategy::conventional &&
      ctx.weights.conventional.empty())
    ctx.weights.conventional = DiffusionWeights::uniform(t, cfg.bridges).conventional;
  const BridgeAssignment checked =
      cfg.strategy == DiffusionStrategy::bridge ? cfg.bridges : BridgeAssignment{};
  if (auto problems = ctx.weights.validate(t, checked); !problems.empty())
    throw ConfigError(problems.front());
  ctx.aux_model = nss_model(fs, cfg.tuning);
  ctx.shared_model = shared_increment_model(fs, cfg.tuning);

  std::map<NodeId, ClarkeSample> obs;
  for (NodeId id : t.nodes())
    obs[id] = samples.at(id).front();
  std::vector<NodeRuntime> nodes = init_nodes(ctx, obs, cfg.tuning);

  DistributedResult result;
  const double dt = 1.0 / fs;
  for (const auto& node : nodes) {
    auto& tr = result.traces[node.id];
    tr.sample_rate_hz = fs;
    tr.records.reserve(n_ticks);
    const auto est = frequency_from_increment(node.diffused[0], fs);
    tr.records.push_back({0, 0.0, est.hz, 0.0, est.flags, node.diffused.top()});
    result.initial_covariance[node.id] =
        cfg.mode == DistributedMode::dfe ? node.shared.M : node.aux.M;
  }
  if (cfg.record_matrices)
    result.records.reserve(n_ticks - 1);

  const bool want_log = cfg.record_matrices || cfg.log_messages;
  for (std::size_t k = 1; k < n_ticks; ++k) {
    for (NodeId id : t.nodes())
      obs[id] = samples.at(id)[k];
    TickLog log;
    dfe_tick(nodes, ctx, obs, static_cast<long>(k), want_log ? &log : nullptr);
    for (const auto& node : nodes) {
      const auto est = frequency_from_increment(node.diffused[0], fs);
      const double innov = want_log ? std::norm(log.records[node.id].innovation) : 0.0;
      result.traces[node.id].records.push_back({static_cast<long>(k),
                                                static_cast<double>(k) * dt, est.hz, innov,
                                                est.flags, node.diffused.top()});
    }
    if (cfg.record_matrices)
      result.records.push_back(std::move(log.records));
    if (cfg.log_messages)
      result.messages.insert(result.messages.end(), log.messages.begin(), log.messages.end());
  }
  return result;
}

DistributedResult run_distributed(const Topology& t, const std::map<NodeId, Scenario>& scenarios,
                                  const DistributedConfig& cfg)
{
  std::optional<double> fs;
  std::optional<std::size_t> count;
  std::map<NodeId, std::vector<ClarkeSample>> samples;
  std::map<NodeId, std::vector<double>> truth;
  for (NodeId id : t.nodes()) {
    auto it = scenarios.find(id);
    if (it == scenarios.end())
      throw ConfigError("node " + std::to_string(id) + " has no scenario");
    const Scenario& s = it->second;
    if (auto problems = s.validate("scenarios[" + std::to_string(id) + "]"); !problems.empty())
      throw ConfigError(problems.front());
    if (!fs) {
      fs = s.sample_rate_hz;
      count = s.sample_count();
    } else if (s.sample_rate_hz != *fs || s.sample_count() != *count) {
      throw ConfigError("node " + std::to_string(id) +
                        ": all scenarios must share sample_rate_hz and duration_s");
    }
    const auto raw = generate(s, node_seed(cfg.seed, id), cfg.tuning.snr_db);
    samples[id] = clarke(raw);
    truth[id] = increment_frequency(s);
  }
  if (!fs)
    throw ConfigError("topology has no nodes");
  DistributedResult r = run_distributed_samples(t, samples, *fs, cfg);
  r.f_true = std::move(truth);
  return r;
}

}  // namespace wlfreq
