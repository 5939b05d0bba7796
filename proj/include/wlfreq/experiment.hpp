// SPDX-License-Identifier: Apache-2.0
//
// Config-driven experiment runner. Configs are JSON documents that may carry
// // and /* */ comments; see configs/ for annotated examples.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "wlfreq/analysis.hpp"
#include "wlfreq/estimators.hpp"
#include "wlfreq/network.hpp"
#include "wlfreq/signal.hpp"

namespace wlfreq {

/// Environment variable that overrides the configured output directory.
inline constexpr const char* kOutDirEnv = "WLFREQ_OUT_DIR";

struct BundledConfig {
  const char* name;
  const char* text;
};

/// Configs compiled in from configs/*.jsonc, sorted by name.
const std::vector<BundledConfig>& bundled_configs();

enum class EstimatorMode { lss, wlss, nss, dfe, distributed_acekf };

std::string to_string(EstimatorMode m);
std::optional<EstimatorMode> parse_estimator_mode(const std::string& s);
bool is_network_mode(EstimatorMode m);

struct AnalysisOptions {
  std::optional<std::pair<double, double>> mse_window_s;        // default: second half
  std::optional<std::pair<double, double>> spectrum_window_s;   // spectrum.csv when set
  bool theory = false;         // error-covariance recursion over recorded matrices
  bool log_messages = false;   // messages.csv
  bool write_samples = false;  // samples.csv (single-node) / samples_node<i>.csv
};

struct ExperimentConfig {
  std::string name;
  std::string description;
  EstimatorMode estimator = EstimatorMode::nss;
  double sample_rate_hz = 1000.0;
  double duration_s = 1.0;
  FilterTuning tuning;
  std::uint64_t seed = 0;
  std::size_t seeds = 1;
  std::string output_dir;

  Scenario scenario;                          // single-node, and default per node
  std::map<NodeId, Scenario> node_scenarios;  // network overrides

  std::optional<Topology> topology;
  std::optional<BridgeAssignment> bridges;    // empty with bridges_auto
  bool bridges_auto = false;
  DiffusionStrategy strategy = DiffusionStrategy::bridge;
  std::optional<DiffusionWeights> weights;
  std::set<Edge> failed_links;

  AnalysisOptions analysis;

  /// Scenario of node `id` (override or the shared one).
  const Scenario& scenario_for(NodeId id) const;
};

struct ParsedConfig {
  std::optional<ExperimentConfig> config;
  std::vector<std::string> diagnostics;   // "field.path: message"
};

/// Parses and checks a config. `config` is set only when there are no
/// diagnostics.
ParsedConfig parse_config(const std::string& text);

/// Reads a config file, or a bundled config when `path_or_name` is not a file
/// but names one. Throws ConfigError when neither exists.
std::string load_config_text(const std::string& path_or_name);

/// Diagnostics for the config; empty iff it is runnable. Does not touch the
/// filesystem beyond reading the config.
std::vector<std::string> validate_config(const std::string& path_or_name);

struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> seeds;
  std::optional<std::string> out_dir;
  unsigned threads = 0;   // 0: hardware concurrency
};

struct RunManifest {
  std::string config_name;
  std::string config_hash;   // FNV-1a 64 of the config text, hex
  std::uint64_t seed = 0;
  std::size_t seeds = 1;
  std::string version;
  std::string estimator;
  std::string output_dir;
  std::vector<std::string> files;   // relative to output_dir, manifest.json included
};

/// --out-dir, then $WLFREQ_OUT_DIR, then the config's output_dir, then
/// "out/<name>".
std::string resolve_output_dir(const ExperimentConfig& cfg, const RunOverrides& o);

/// Runs the experiment and writes its artifacts. Throws ConfigError listing
/// the diagnostics of an invalid config.
RunManifest run_experiment(const std::string& path_or_name, const RunOverrides& o = {});
RunManifest run_experiment(const ExperimentConfig& cfg, const std::string& config_text,
                           const RunOverrides& o = {});

/// Configured MSE window, or the second half of the run.
Window mse_window(const ExperimentConfig& cfg);
/// Network run settings for one seed.
DistributedConfig distributed_config(const ExperimentConfig& cfg, std::uint64_t seed);
/// Scenario of every node of the configured topology.
std::map<NodeId, Scenario> network_scenarios(const ExperimentConfig& cfg);

std::string fnv1a_hex(const std::string& text);

}  // namespace wlfreq
