// SPDX-License-Identifier: Apache-2.0
//
// Bridge-node diffusion over an undirected measurement network.
//
// Every tick each node runs its local filter, non-bridge nodes send their a
// posteriori estimate to the neighbouring bridges, bridges average over their
// closed neighbourhood and send the result back, and non-bridge nodes average
// the bridge estimates they received. The combined value re-seeds the local
// filters for the next tick.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "wlfreq/augmented.hpp"
#include "wlfreq/estimators.hpp"
#include "wlfreq/signal.hpp"

namespace wlfreq {

using NodeId = int;
using Edge = std::pair<NodeId, NodeId>;

class Topology {
public:
  Topology() = default;
  /// Edges are stored as (min, max) pairs; duplicates collapse.
  Topology(std::vector<NodeId> nodes, const std::vector<Edge>& edges);

  const std::vector<NodeId>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  std::size_t size() const { return nodes_.size(); }

  bool has_node(NodeId id) const;
  bool has_edge(NodeId a, NodeId b) const;
  const std::vector<NodeId>& neighbors(NodeId id) const;
  std::vector<NodeId> closed_neighborhood(NodeId id) const;
  std::size_t degree(NodeId id) const { return neighbors(id).size(); }
  /// Position of the node in nodes(); used to index stacked matrices.
  std::size_t index_of(NodeId id) const;

  bool connected() const;
  /// Self-loops, duplicate ids and edges to unknown nodes. A disconnected
  /// graph is reported with a "warning:" prefix.
  std::vector<std::string> validate() const;

  /// Seven-node network with bridges {4, 6}.
  static Topology reference7();

private:
  std::vector<NodeId> nodes_;
  std::vector<Edge> edges_;
  std::map<NodeId, std::vector<NodeId>> adjacency_;
};

struct BridgeAssignment {
  std::set<NodeId> bridges;

  bool is_bridge(NodeId id) const { return bridges.count(id) != 0; }
};

/// Independence and domination violations, naming the offending edge or node.
std::vector<std::string> check_bridges(const Topology& t, const BridgeAssignment& b);

/// Bridges adjacent to node m (B_m).
std::vector<NodeId> bridge_neighbors(const Topology& t, const BridgeAssignment& b, NodeId m);

/// Greedy maximal independent set in order of descending degree, ties broken
/// by a seeded shuffle, followed by a domination repair pass. Throws
/// TopologyError naming any isolated node.
BridgeAssignment select_bridges(const Topology& t, std::uint64_t seed);

using WeightRow = std::map<NodeId, double>;

struct DiffusionWeights {
  std::map<NodeId, WeightRow> beta;           // bridge i -> weights over closed N_i
  std::map<NodeId, WeightRow> gamma;          // non-bridge m -> weights over B_m
  std::map<NodeId, WeightRow> conventional;   // every node -> weights over closed N_i

  /// beta = 1/|N_i|, gamma = 1/|B_m|, conventional = 1/|N_i|.
  static DiffusionWeights uniform(const Topology& t, const BridgeAssignment& b);
  std::vector<std::string> validate(const Topology& t, const BridgeAssignment& b) const;
};

enum class MissingPolicy { error, renormalize };

/// sum_l beta_{l,i} x_l over the closed neighbourhood of bridge i.
AugmentedVector bridge_diffuse(NodeId i, const std::map<NodeId, AugmentedVector>& estimates,
                               const DiffusionWeights& w,
                               MissingPolicy policy = MissingPolicy::error);
/// sum_l gamma_{l,m} x_l over the bridges adjacent to non-bridge m.
AugmentedVector nonbridge_diffuse(NodeId m,
                                  const std::map<NodeId, AugmentedVector>& bridge_estimates,
                                  const DiffusionWeights& w,
                                  MissingPolicy policy = MissingPolicy::error);
/// Weighted sum over `row`. Missing entries either throw or are dropped with
/// the remaining weights renormalized.
AugmentedVector combine(NodeId dst, const WeightRow& row,
                        const std::map<NodeId, AugmentedVector>& estimates,
                        MissingPolicy policy);

enum class DiffusionStrategy { bridge, conventional, none };
enum class DistributedMode {
  dfe,          // shared phase increment, local auxiliary N-SS filters
  full_state,   // plain distributed ACEKF on the N-SS state
};

std::string to_string(DiffusionStrategy s);
std::string to_string(DistributedMode m);
std::optional<DiffusionStrategy> parse_strategy(const std::string& s);

/// Row-stochastic stage matrices over topology().nodes() order. The combined
/// estimates of a tick are second * first * posteriors.
struct CombinationOperator {
  std::vector<NodeId> order;
  Eigen::MatrixXd first;
  Eigen::MatrixXd second;
};
CombinationOperator combination_operator(const Topology& t, const BridgeAssignment& b,
                                         const DiffusionWeights& w, DiffusionStrategy s);

struct Message {
  long k = 0;
  std::string phase;
  NodeId src = 0;
  NodeId dst = 0;
  cd payload;   // phase-increment entry of the transmitted estimate
};

/// CSV `k,phase,src,dst,payload_re,payload_im`.
void write_message_log_csv(std::ostream& os, const std::vector<Message>& log);

struct NodeRuntime {
  NodeId id = 0;
  FilterState shared;   // phase increment (dfe mode)
  FilterState aux;      // local N-SS filter
  AugmentedVector diffused;
};

struct DistributedContext {
  Topology topology;
  BridgeAssignment bridges;
  DiffusionWeights weights;
  DiffusionStrategy strategy = DiffusionStrategy::bridge;
  DistributedMode mode = DistributedMode::dfe;
  StateSpaceModel aux_model;
  StateSpaceModel shared_model;
  std::set<Edge> failed_links;   // (min, max) pairs
};

struct TickLog {
  std::vector<Message> messages;
  std::map<NodeId, StepRecord> records;    // dfe: shared filter; full_state: N-SS filter
  std::map<NodeId, AugmentedVector> posteriors;
};

/// Builds node runtimes from each node's first observation.
std::vector<NodeRuntime> init_nodes(const DistributedContext& ctx,
                                    const std::map<NodeId, ClarkeSample>& first_obs,
                                    const FilterTuning& tuning);

/// One synchronous round. Throws Error tagged with the node id when a local
/// filter fails.
void dfe_tick(std::vector<NodeRuntime>& nodes, const DistributedContext& ctx,
              const std::map<NodeId, ClarkeSample>& observations, long k,
              TickLog* log = nullptr);

struct DistributedConfig {
  DistributedMode mode = DistributedMode::dfe;
  DiffusionStrategy strategy = DiffusionStrategy::bridge;
  BridgeAssignment bridges;
  std::optional<DiffusionWeights> weights;   // uniform when empty
  FilterTuning tuning;
  std::uint64_t seed = 0;
  bool record_matrices = false;
  bool log_messages = false;
  std::set<Edge> failed_links;
};

struct DistributedResult {
  std::map<NodeId, FreqTrace> traces;
  std::map<NodeId, std::vector<double>> f_true;
  /// records[k - 1] holds tick k, filled when record_matrices is set.
  std::vector<std::map<NodeId, StepRecord>> records;
  std::map<NodeId, AugmentedMatrix> initial_covariance;
  std::vector<Message> messages;
};

/// Per-node noise stream seed.
std::uint64_t node_seed(std::uint64_t seed, NodeId id);

/// Generates each node's samples (noise seeded by node_seed) and runs the
/// tick loop. Throws ConfigError on mismatched scenarios or missing nodes.
DistributedResult run_distributed(const Topology& t, const std::map<NodeId, Scenario>& scenarios,
                                  const DistributedConfig& cfg);

/// Tick loop over pre-generated samples.
DistributedResult run_distributed_samples(
    const Topology& t, const std::map<NodeId, std::vector<ClarkeSample>>& samples, double fs,
    const DistributedConfig& cfg);

}  // namespace wlfreq
