// SPDX-License-Identifier: Apache-2.0
#include "wlfreq/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <locale>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "wlfreq/analysis.hpp"
#include "wlfreq/csv.hpp"
#include "wlfreq/error.hpp"
#include "wlfreq/parallel.hpp"

namespace wlfreq {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

// Collects "path: message" diagnostics while walking the document.
class Reader {
public:
  std::vector<std::string> diags;

  void error(const std::string& path, const std::string& msg) { diags.push_back(path + ": " + msg); }

  static std::string join(const std::string& path, const std::string& key)
  {
    return path.empty() ? key : path + "." + key;
  }

  bool object(const json& j, const std::string& path)
  {
    if (!j.is_object()) {
      error(path.empty() ? "<root>" : path, "expected an object");
      return false;
    }
    return true;
  }

  void known_keys(const json& obj, const std::string& path, std::initializer_list<const char*> keys)
  {
    for (const auto& [k, v] : obj.items())
      if (std::none_of(keys.begin(), keys.end(), [&](const char* a) { return k == a; }))
        error(join(path, k), "unknown field");
  }

  std::optional<double> number(const json& obj, const std::string& key, const std::string& path,
                               bool required)
  {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) {
      if (required)
        error(join(path, key), "missing required number");
      return std::nullopt;
    }
    if (!it->is_number()) {
      error(join(path, key), "expected a number");
      return std::nullopt;
    }
    const double v = it->get<double>();
    if (!std::isfinite(v)) {
      error(join(path, key), "must be finite");
      return std::nullopt;
    }
    return v;
  }

  std::optional<std::string> string(const json& obj, const std::string& key,
                                    const std::string& path, bool required)
  {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) {
      if (required)
        error(join(path, key), "missing required string");
      return std::nullopt;
    }
    if (!it->is_string()) {
      error(join(path, key), "expected a string");
      return std::nullopt;
    }
    return it->get<std::string>();
  }

  std::optional<bool> boolean(const json& obj, const std::string& key, const std::string& path)
  {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null())
      return std::nullopt;
    if (!it->is_boolean()) {
      error(join(path, key), "expected true or false");
      return std::nullopt;
    }
    return it->get<bool>();
  }

  std::optional<std::uint64_t> unsigned_int(const json& obj, const std::string& key,
                                            const std::string& path)
  {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null())
      return std::nullopt;
    if (!it->is_number_unsigned()) {
      error(join(path, key), "expected a non-negative integer");
      return std::nullopt;
    }
    return it->get<std::uint64_t>();
  }

  std::optional<std::vector<double>> numbers(const json& obj, const std::string& key,
                                             const std::string& path, std::size_t n)
  {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null())
      return std::nullopt;
    if (!it->is_array() || it->size() != n ||
        !std::all_of(it->begin(), it->end(), [](const json& e) { return e.is_number(); })) {
      error(join(path, key), "expected an array of " + std::to_string(n) + " numbers");
      return std::nullopt;
    }
    std::vector<double> out;
    for (const auto& e : *it)
      out.push_back(e.get<double>());
    return out;
  }

  std::optional<NodeId> node_id(const json& j, const std::string& path)
  {
    if (!j.is_number_integer()) {
      error(path, "expected an integer node id");
      return std::nullopt;
    }
    return j.get<NodeId>();
  }

  std::optional<NodeId> node_key(const std::string& key, const std::string& path)
  {
    try {
      std::size_t used = 0;
      const int v = std::stoi(key, &used);
      if (used == key.size())
        return v;
    } catch (const std::exception&) {
    }
    error(path, "'" + key + "' is not an integer node id");
    return std::nullopt;
  }

  std::optional<std::pair<double, double>> interval(const json& obj, const std::string& key,
                                                    const std::string& path)
  {
    auto v = numbers(obj, key, path, 2);
    if (!v)
      return std::nullopt;
    if (!((*v)[0] < (*v)[1])) {
      error(join(path, key), "interval start must be before its end");
      return std::nullopt;
    }
    return std::pair{(*v)[0], (*v)[1]};
  }

  std::optional<std::vector<Edge>> edges(const json& obj, const std::string& key,
                                         const std::string& path)
  {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null())
      return std::nullopt;
    if (!it->is_array()) {
      error(join(path, key), "expected an array of [a, b] pairs");
      return std::nullopt;
    }
    std::vector<Edge> out;
    for (std::size_t i = 0; i < it->size(); ++i) {
      const json& e = (*it)[i];
      const std::string p = join(path, key) + "[" + std::to_string(i) + "]";
      if (!e.is_array() || e.size() != 2) {
        error(p, "expected a pair of node ids");
        continue;
      }
      auto a = node_id(e[0], p);
      auto b = node_id(e[1], p);
      if (a && b)
        out.emplace_back(*a, *b);
    }
    return out;
  }
};

Scenario parse_scenario(Reader& r, const json& j, const std::string& path, double fs,
                        double duration)
{
  Scenario s;
  s.sample_rate_hz = fs;
  s.duration_s = duration;
  if (!r.object(j, path))
    return s;
  r.known_keys(j, path, {"segments"});
  auto it = j.find("segments");
  if (it == j.end() || !it->is_array() || it->empty()) {
    r.error(Reader::join(path, "segments"), "expected a non-empty array of segments");
    return s;
  }
  for (std::size_t i = 0; i < it->size(); ++i) {
    const json& e = (*it)[i];
    const std::string p = path + ".segments[" + std::to_string(i) + "]";
    if (!r.object(e, p))
      continue;
    r.known_keys(e, p,
                 {"start_s", "end_s", "frequency_hz", "step_to_hz", "ramp", "amplitudes",
                  "phases_deg", "note"});
    ScenarioSegment seg;
    seg.start_s = r.number(e, "start_s", p, true).value_or(0.0);
    seg.end_s = r.number(e, "end_s", p, true).value_or(0.0);
    const int kinds = int(e.contains("frequency_hz")) + int(e.contains("step_to_hz")) +
                      int(e.contains("ramp"));
    if (kinds != 1) {
      r.error(p, "exactly one of frequency_hz, step_to_hz or ramp is required");
    } else if (e.contains("frequency_hz")) {
      seg.freq = FreqProfile::constant(r.number(e, "frequency_hz", p, true).value_or(50.0));
    } else if (e.contains("step_to_hz")) {
      seg.freq = FreqProfile::step(r.number(e, "step_to_hz", p, true).value_or(50.0));
    } else {
      const json& ramp = e["ramp"];
      const std::string rp = p + ".ramp";
      if (r.object(ramp, rp)) {
        r.known_keys(ramp, rp, {"f0_hz", "rate_hz_per_s"});
        seg.freq = FreqProfile::ramp(r.number(ramp, "f0_hz", rp, true).value_or(50.0),
                                     r.number(ramp, "rate_hz_per_s", rp, true).value_or(0.0));
      }
    }
    if (auto a = r.numbers(e, "amplitudes", p, 3))
      seg.amplitudes = {(*a)[0], (*a)[1], (*a)[2]};
    if (auto ph = r.numbers(e, "phases_deg", p, 3))
      seg.phase_offsets_rad = {(*ph)[0] * kDeg, (*ph)[1] * kDeg, (*ph)[2] * kDeg};
    s.segments.push_back(seg);
  }
  for (auto& d : s.validate(path))
    r.diags.push_back(std::move(d));
  return s;
}

std::optional<DiffusionWeights> parse_weights(Reader& r, const json& j, const std::string& path)
{
  if (!r.object(j, path))
    return std::nullopt;
  r.known_keys(j, path, {"beta", "gamma", "conventional"});
  DiffusionWeights w;
  auto table = [&](const char* key, std::map<NodeId, WeightRow>& out) {
    auto it = j.find(key);
    if (it == j.end())
      return;
    const std::string tp = Reader::join(path, key);
    if (!r.object(*it, tp))
      return;
    for (const auto& [node, row] : it->items()) {
      const std::string rp = tp + "." + node;
      auto id = r.node_key(node, rp);
      if (!id || !r.object(row, rp))
        continue;
      WeightRow wr;
      for (const auto& [src, v] : row.items()) {
        auto sid = r.node_key(src, rp + "." + src);
        if (!v.is_number()) {
          r.error(rp + "." + src, "expected a number");
          continue;
        }
        if (sid)
          wr[*sid] = v.get<double>();
      }
      out[*id] = wr;
    }
  };
  table("beta", w.beta);
  table("gamma", w.gamma);
  table("conventional", w.conventional);
  return w;
}

void parse_network(Reader& r, const json& j, ExperimentConfig& cfg)
{
  const std::string path = "network";
  if (!r.object(j, path))
    return;
  r.known_keys(j, path,
               {"reference7", "nodes", "edges", "bridges", "strategy", "weights", "failed_links",
                "node_scenarios"});

  if (r.boolean(j, "reference7", path).value_or(false)) {
    if (j.contains("nodes") || j.contains("edges"))
      r.error(path, "reference7 cannot be combined with nodes or edges");
    cfg.topology = Topology::reference7();
  } else {
    std::vector<NodeId> nodes;
    auto it = j.find("nodes");
    if (it == j.end() || !it->is_array() || it->empty()) {
      r.error(path + ".nodes", "expected a non-empty array of node ids");
    } else {
      for (std::size_t i = 0; i < it->size(); ++i)
        if (auto id = r.node_id((*it)[i], path + ".nodes[" + std::to_string(i) + "]"))
          nodes.push_back(*id);
    }
    auto edges = r.edges(j, "edges", path).value_or(std::vector<Edge>{});
    cfg.topology = Topology(nodes, edges);
    for (const auto& d : cfg.topology->validate())
      if (d.rfind("warning:", 0) != 0)
        r.error(path, d);
  }
  const Topology& topo = *cfg.topology;

  if (auto s = r.string(j, "strategy", path, false)) {
    if (auto st = parse_strategy(*s))
      cfg.strategy = *st;
    else
      r.error(path + ".strategy", "unknown strategy '" + *s + "' (bridge, conventional, none)");
  }

  auto bit = j.find("bridges");
  if (bit == j.end() || bit->is_null()) {
    if (cfg.strategy == DiffusionStrategy::bridge)
      r.error(path + ".bridges", "required for the bridge strategy (list of ids or \"auto\")");
  } else if (bit->is_string()) {
    if (bit->get<std::string>() != "auto") {
      r.error(path + ".bridges", "expected a list of node ids or \"auto\"");
    } else {
      cfg.bridges_auto = true;
      try {
        cfg.bridges = select_bridges(topo, 0);
      } catch (const TopologyError& e) {
        r.error(path + ".bridges", e.what());
      }
    }
  } else if (bit->is_array()) {
    BridgeAssignment b;
    for (std::size_t i = 0; i < bit->size(); ++i)
      if (auto id = r.node_id((*bit)[i], path + ".bridges[" + std::to_string(i) + "]"))
        b.bridges.insert(*id);
    for (const auto& d : check_bridges(topo, b))
      r.error(path, d);
    cfg.bridges = b;
  } else {
    r.error(path + ".bridges", "expected a list of node ids or \"auto\"");
  }

  if (auto wit = j.find("weights"); wit != j.end()) {
    cfg.weights = parse_weights(r, *wit, path + ".weights");
    if (cfg.weights && cfg.bridges) {
      if (cfg.weights->conventional.empty())
        cfg.weights->conventional =
            DiffusionWeights::uniform(topo, *cfg.bridges).conventional;
      for (const auto& d : cfg.weights->validate(topo, *cfg.bridges))
        r.error(path, d);
    }
  }

  if (auto links = r.edges(j, "failed_links", path)) {
    for (const auto& [a, b] : *links) {
      if (!topo.has_edge(a, b))
        r.error(path + ".failed_links",
                "link " + std::to_string(a) + "-" + std::to_string(b) + " is not an edge");
      cfg.failed_links.insert(a < b ? Edge{a, b} : Edge{b, a});
    }
  }

  if (auto sit = j.find("node_scenarios"); sit != j.end()) {
    const std::string sp = path + ".node_scenarios";
    if (r.object(*sit, sp)) {
      for (const auto& [key, sc] : sit->items()) {
        auto id = r.node_key(key, sp + "." + key);
        if (!id)
          continue;
        if (!topo.has_node(*id))
          r.error(sp + "." + key, "node " + key + " is not in the topology");
        cfg.node_scenarios[*id] =
            parse_scenario(r, sc, sp + "." + key, cfg.sample_rate_hz, cfg.duration_s);
      }
    }
  }
}

void parse_analysis(Reader& r, const json& j, AnalysisOptions& a, const ExperimentConfig& cfg)
{
  const std::string path = "analysis";
  if (!r.object(j, path))
    return;
  r.known_keys(j, path,
               {"mse_window_s", "spectrum_window_s", "theory", "log_messages", "write_samples"});
  a.mse_window_s = r.interval(j, "mse_window_s", path);
  a.spectrum_window_s = r.interval(j, "spectrum_window_s", path);
  a.theory = r.boolean(j, "theory", path).value_or(false);
  a.log_messages = r.boolean(j, "log_messages", path).value_or(false);
  a.write_samples = r.boolean(j, "write_samples", path).value_or(false);
  auto inside = [&](const std::optional<std::pair<double, double>>& w, const char* key) {
    if (w && (w->first < 0.0 || w->second > cfg.duration_s + 1e-12))
      r.error(Reader::join(path, key), "window lies outside [0, duration_s]");
  };
  inside(a.mse_window_s, "mse_window_s");
  inside(a.spectrum_window_s, "spectrum_window_s");
  if (a.spectrum_window_s &&
      std::llround((a.spectrum_window_s->second - a.spectrum_window_s->first) *
                   cfg.sample_rate_hz) < 512)
    r.error(path + ".spectrum_window_s", "window must cover at least 512 samples");
  if (is_network_mode(cfg.estimator) && a.spectrum_window_s)
    r.error(path + ".spectrum_window_s", "only available for single-node estimators");
  if (!is_network_mode(cfg.estimator) && (a.theory || a.log_messages))
    r.error(path, "theory and log_messages need a network estimator");
}

std::string read_text(const fs::path& p)
{
  std::ifstream in(p, std::ios::binary);
  if (!in)
    throw ConfigError("cannot read config '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::ofstream open_output(const fs::path& p)
{
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out)
    throw Error("cannot write '" + p.string() + "'");
  out.imbue(std::locale::classic());
  return out;
}

struct SeedOutcome {
  MseReport mse;
  std::map<NodeId, double> mean_error;
};

}  // namespace

std::string to_string(EstimatorMode m)
{
  switch (m) {
  case EstimatorMode::lss: return "lss";
  case EstimatorMode::wlss: return "wlss";
  case EstimatorMode::nss: return "nss";
  case EstimatorMode::dfe: return "dfe";
  case EstimatorMode::distributed_acekf: return "distributed-acekf";
  }
  return "unknown";
}

std::optional<EstimatorMode> parse_estimator_mode(const std::string& s)
{
  if (s == "lss") return EstimatorMode::lss;
  if (s == "wlss") return EstimatorMode::wlss;
  if (s == "nss") return EstimatorMode::nss;
  if (s == "dfe") return EstimatorMode::dfe;
  if (s == "distributed-acekf") return EstimatorMode::distributed_acekf;
  return std::nullopt;
}

bool is_network_mode(EstimatorMode m)
{
  return m == EstimatorMode::dfe || m == EstimatorMode::distributed_acekf;
}

const Scenario& ExperimentConfig::scenario_for(NodeId id) const
{
  auto it = node_scenarios.find(id);
  return it == node_scenarios.end() ? scenario : it->second;
}

ParsedConfig parse_config(const std::string& text)
{
  ParsedConfig out;
  json doc;
  try {
    doc = json::parse(text, nullptr, true, true);
  } catch (const json::parse_error& e) {
    out.diagnostics.push_back(std::string("<syntax>: ") + e.what());
    return out;
  }
  Reader r;
  ExperimentConfig cfg;
  if (!r.object(doc, "")) {
    out.diagnostics = r.diags;
    return out;
  }
  r.known_keys(doc, "",
               {"name", "description", "estimator", "sample_rate_hz", "duration_s", "snr_db",
                "seed", "seeds", "output_dir", "tuning", "scenario", "network", "analysis"});

  cfg.name = r.string(doc, "name", "", false).value_or("");
  cfg.description = r.string(doc, "description", "", false).value_or("");
  if (auto e = r.string(doc, "estimator", "", true)) {
    if (auto m = parse_estimator_mode(*e))
      cfg.estimator = *m;
    else
      r.error("estimator", "unknown estimator '" + *e +
                               "' (lss, wlss, nss, dfe, distributed-acekf)");
  }
  cfg.sample_rate_hz = r.number(doc, "sample_rate_hz", "", false).value_or(1000.0);
  if (!(cfg.sample_rate_hz > 0.0))
    r.error("sample_rate_hz", "must be positive");
  cfg.duration_s = r.number(doc, "duration_s", "", true).value_or(1.0);
  if (!(cfg.duration_s > 0.0))
    r.error("duration_s", "must be positive");
  cfg.tuning.snr_db = r.number(doc, "snr_db", "", false);
  cfg.seed = r.unsigned_int(doc, "seed", "").value_or(0);
  cfg.seeds = static_cast<std::size_t>(r.unsigned_int(doc, "seeds", "").value_or(1));
  if (cfg.seeds == 0)
    r.error("seeds", "must be at least 1");
  cfg.output_dir = r.string(doc, "output_dir", "", false).value_or("");

  if (auto it = doc.find("tuning"); it != doc.end() && r.object(*it, "tuning")) {
    r.known_keys(*it, "tuning",
                 {"cu_increment", "cu_voltage", "m0", "f_nominal_hz", "cn_floor", "cn"});
    auto positive = [&](const char* key, double& dst) {
      if (auto v = r.number(*it, key, "tuning", false)) {
        if (*v > 0.0)
          dst = *v;
        else
          r.error(std::string("tuning.") + key, "must be positive");
      }
    };
    positive("cu_increment", cfg.tuning.cu_increment);
    positive("cu_voltage", cfg.tuning.cu_voltage);
    positive("m0", cfg.tuning.m0);
    positive("f_nominal_hz", cfg.tuning.f_nominal_hz);
    positive("cn_floor", cfg.tuning.cn_floor);
    double cn = 0.0;
    if (it->contains("cn")) {
      positive("cn", cn);
      if (cn > 0.0)
        cfg.tuning.cn_override = cn;
    }
  }

  if (auto it = doc.find("scenario"); it != doc.end())
    cfg.scenario = parse_scenario(r, *it, "scenario", cfg.sample_rate_hz, cfg.duration_s);
  else
    r.error("scenario", "missing required section");

  const bool network = is_network_mode(cfg.estimator);
  if (auto it = doc.find("network"); it != doc.end()) {
    if (!network)
      r.error("network", "only valid with estimator dfe or distributed-acekf");
    else
      parse_network(r, *it, cfg);
  } else if (network) {
    r.error("network", "required for estimator " + to_string(cfg.estimator));
  }

  if (auto it = doc.find("analysis"); it != doc.end())
    parse_analysis(r, *it, cfg.analysis, cfg);

  if (r.diags.empty() && !cfg.analysis.mse_window_s && cfg.scenario.sample_count() < 2)
    r.error("duration_s", "run is too short for an MSE window");

  out.diagnostics = std::move(r.diags);
  if (out.diagnostics.empty())
    out.config = std::move(cfg);
  return out;
}

std::string load_config_text(const std::string& path_or_name)
{
  std::error_code ec;
  if (fs::is_regular_file(path_or_name, ec))
    return read_text(path_or_name);
  std::string name = fs::path(path_or_name).stem().string();
  for (const auto& b : bundled_configs())
    if (path_or_name == b.name || name == b.name)
      return b.text;
  throw ConfigError("cannot read config '" + path_or_name +
                    "': no such file or bundled experiment");
}

std::vector<std::string> validate_config(const std::string& path_or_name)
{
  std::string text;
  try {
    text = load_config_text(path_or_name);
  } catch (const ConfigError& e) {
    return {e.what()};
  }
  return parse_config(text).diagnostics;
}

std::string resolve_output_dir(const ExperimentConfig& cfg, const RunOverrides& o)
{
  if (o.out_dir && !o.out_dir->empty())
    return *o.out_dir;
  if (const char* env = std::getenv(kOutDirEnv); env && *env)
    return env;
  if (!cfg.output_dir.empty())
    return cfg.output_dir;
  return "out/" + (cfg.name.empty() ? std::string("experiment") : cfg.name);
}

Window mse_window(const ExperimentConfig& cfg)
{
  if (cfg.analysis.mse_window_s)
    return Window::seconds(cfg.analysis.mse_window_s->first, cfg.analysis.mse_window_s->second,
                           cfg.sample_rate_hz);
  const std::size_t n = cfg.scenario_for(0).sample_count();
  return {n / 2, n};
}

DistributedConfig distributed_config(const ExperimentConfig& cfg, std::uint64_t seed)
{
  DistributedConfig d;
  d.mode = cfg.estimator == EstimatorMode::dfe ? DistributedMode::dfe : DistributedMode::full_state;
  d.strategy = cfg.strategy;
  d.bridges = cfg.bridges.value_or(BridgeAssignment{});
  d.weights = cfg.weights;
  d.tuning = cfg.tuning;
  d.seed = seed;
  d.failed_links = cfg.failed_links;
  return d;
}

std::map<NodeId, Scenario> network_scenarios(const ExperimentConfig& cfg)
{
  std::map<NodeId, Scenario> out;
  for (NodeId id : cfg.topology->nodes())
    out[id] = cfg.scenario_for(id);
  return out;
}

std::string fnv1a_hex(const std::string& text)
{
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RunManifest run_experiment(const std::string& path_or_name, const RunOverrides& o)
{
  const std::string text = load_config_text(path_or_name);
  ParsedConfig parsed = parse_config(text);
  if (!parsed.config) {
    std::string msg = "invalid config '" + path_or_name + "':";
    for (const auto& d : parsed.diagnostics)
      msg += "\n  " + d;
    throw ConfigError(msg);
  }
  if (parsed.config->name.empty())
    parsed.config->name = fs::path(path_or_name).stem().string();
  return run_experiment(*parsed.config, text, o);
}

RunManifest run_experiment(const ExperimentConfig& cfg_in, const std::string& config_text,
                           const RunOverrides& o)
{
  ExperimentConfig cfg = cfg_in;
  if (o.seed)
    cfg.seed = *o.seed;
  if (o.seeds) {
    if (*o.seeds == 0)
      throw ConfigError("--seeds must be at least 1");
    cfg.seeds = *o.seeds;
  }

  RunManifest man;
  man.config_name = cfg.name;
  man.config_hash = fnv1a_hex(config_text);
  man.seed = cfg.seed;
  man.seeds = cfg.seeds;
  man.version = WLFREQ_VERSION;
  man.estimator = to_string(cfg.estimator);
  man.output_dir = resolve_output_dir(cfg, o);

  const fs::path dir(man.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec)
    throw Error("cannot create output directory '" + dir.string() + "': " + ec.message());

  std::set<std::string> files;
  auto emit = [&](const std::string& name) {
    files.insert(name);
    return open_output(dir / name);
  };

  const Window win = mse_window(cfg);
  std::vector<SeedOutcome> outcomes(cfg.seeds);
  MseReport theory;

  if (!is_network_mode(cfg.estimator)) {
    const ModelKind kind = cfg.estimator == EstimatorMode::lss    ? ModelKind::lss
                           : cfg.estimator == EstimatorMode::wlss ? ModelKind::wlss
                                                                  : ModelKind::nss;
    const Scenario& sc = cfg.scenario;
    const std::vector<double> truth = increment_frequency(sc);
    const FilterTuning tuning = cfg.tuning;

    std::vector<ThreePhaseSample> base_raw;
    FreqTrace base_trace;
    parallel_for(cfg.seeds, o.threads, [&](std::size_t i) {
      const auto raw = generate(sc, cfg.seed + i, tuning.snr_db);
      const auto obs = clarke(raw);
      FreqTrace tr = run_estimator(kind, obs, sc.sample_rate_hz, tuning);
      std::map<NodeId, FreqTrace> m{{1, tr}};
      outcomes[i].mse = empirical_mse(m, truth, win);
      outcomes[i].mean_error[1] = trace_mean_error(tr, truth, win);
      if (i == 0) {
        base_raw = raw;
        base_trace = std::move(tr);
      }
    });

    {
      auto out = emit("trace.csv");
      write_trace_csv(out, base_trace, truth);
    }
    if (cfg.analysis.write_samples) {
      auto out = emit("samples.csv");
      write_samples_csv(out, base_raw, sc.sample_rate_hz);
    }
    if (cfg.analysis.spectrum_window_s) {
      const Window sw = Window::seconds(cfg.analysis.spectrum_window_s->first,
                                        cfg.analysis.spectrum_window_s->second,
                                        sc.sample_rate_hz);
      auto out = emit("spectrum.csv");
      write_spectrum_csv(out, error_spectrum(base_trace, truth, sw));
    }
  } else {
    const Topology& topo = *cfg.topology;
    const auto scenarios = network_scenarios(cfg);
    DistributedResult base;
    parallel_for(cfg.seeds, o.threads, [&](std::size_t i) {
      DistributedConfig dc = distributed_config(cfg, cfg.seed + i);
      if (i == 0) {
        dc.record_matrices = cfg.analysis.theory;
        dc.log_messages = cfg.analysis.log_messages;
      }
      DistributedResult r = run_distributed(topo, scenarios, dc);
      outcomes[i].mse = empirical_mse(r.traces, r.f_true, win);
      for (const auto& [id, tr] : r.traces)
        outcomes[i].mean_error[id] = trace_mean_error(tr, r.f_true.at(id), win);
      if (i == 0)
        base = std::move(r);
    });

    for (NodeId id : topo.nodes()) {
      auto out = emit("trace_node" + std::to_string(id) + ".csv");
      write_trace_csv(out, base.traces.at(id), base.f_true.at(id));
    }
    if (cfg.analysis.write_samples) {
      for (NodeId id : topo.nodes()) {
        const Scenario& sc = cfg.scenario_for(id);
        auto out = emit("samples_node" + std::to_string(id) + ".csv");
        write_samples_csv(out, generate(sc, node_seed(cfg.seed, id), cfg.tuning.snr_db),
                          sc.sample_rate_hz);
      }
    }
    if (cfg.analysis.log_messages) {
      auto out = emit("messages.csv");
      write_message_log_csv(out, base.messages);
    }
    if (cfg.analysis.theory) {
      const DistributedConfig dc = distributed_config(cfg, cfg.seed);
      const BridgeAssignment bridges = dc.bridges;
      DiffusionWeights w = cfg.weights ? *cfg.weights : DiffusionWeights::uniform(topo, bridges);
      const StateSpaceModel model = dc.mode == DistributedMode::dfe
                                        ? shared_increment_model(cfg.sample_rate_hz, dc.tuning)
                                        : nss_model(cfg.sample_rate_hz, dc.tuning);
      auto state = NetworkErrorState::block_diagonal(topo.nodes(), base.initial_covariance,
                                                     model.Cu, model.Cn);
      const auto op = combination_operator(topo, bridges, w, cfg.strategy);
      std::map<NodeId, bool> ok;
      std::map<NodeId, double> last;
      for (NodeId id : topo.nodes())
        ok[id] = true;
      for (const auto& rec : base.records) {
        const MseStep step = mse_step(state, op, rec, bridges, topo);
        for (const auto& [id, b] : step.bound_ok)
          ok[id] = ok[id] && b;
        last = step.sigma_trace;
      }
      for (NodeId id : topo.nodes()) {
        NodeMse n;
        n.node = id;
        n.theoretical_trace = last.count(id) ? last.at(id) : std::nan("");
        n.bound_ok = ok.at(id);
        theory.nodes.push_back(n);
      }
    }
  }

  std::vector<MseReport> reports;
  for (const auto& oc : outcomes)
    reports.push_back(oc.mse);
  MseReport summary = monte_carlo_mse(reports);
  for (auto& n : summary.nodes)
    for (const auto& t : theory.nodes)
      if (t.node == n.node) {
        n.theoretical_trace = t.theoretical_trace;
        n.bound_ok = t.bound_ok;
      }
  {
    auto out = emit("mse_report.csv");
    write_mse_csv(out, summary);
  }
  if (cfg.seeds > 1) {
    auto out = emit("sweep.csv");
    out << "seed,node,mse_hz2,mean_error_hz\n";
    for (std::size_t i = 0; i < outcomes.size(); ++i)
      for (const auto& n : outcomes[i].mse.nodes)
        out << (cfg.seed + i) << ',' << n.node << ',' << format_double(n.empirical_mse_hz2) << ','
            << format_double(outcomes[i].mean_error.at(n.node)) << '\n';
  }

  files.insert("manifest.json");
  man.files.assign(files.begin(), files.end());
  nlohmann::ordered_json mj;
  mj["config_name"] = man.config_name;
  mj["config_hash"] = man.config_hash;
  mj["estimator"] = man.estimator;
  mj["seed"] = man.seed;
  mj["seeds"] = man.seeds;
  mj["version"] = man.version;
  mj["files"] = man.files;
  {
    auto out = open_output(dir / "manifest.json");
    out << mj.dump(2) << '\n';
  }
  return man;
}

}  // namespace wlfreq
