// SPDX-License-Identifier: Apache-2.0
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <doctest.h>
#include <json.hpp>

#include "wlfreq/error.hpp"
#include "wlfreq/experiment.hpp"

using namespace wlfreq;
namespace fs = std::filesystem;

namespace {

const char* kSmall = R"({
  "name": "small",
  "estimator": "nss",
  "duration_s": 0.3,
  "snr_db": 30,
  "scenario": {"segments": [{"start_s": 0, "end_s": 0.3, "frequency_hz": 50}]}
})";

std::string network_config(const std::string& bridges)
{
  return R"({
  "name": "net",
  "estimator": "dfe",
  "duration_s": 0.3,
  "snr_db": 30,
  "scenario": {"segments": [{"start_s": 0, "end_s": 0.3, "frequency_hz": 50}]},
  "network": {"reference7": true, "bridges": )" +
         bridges + R"(},
  "analysis": {"mse_window_s": [0.1, 0.3], "theory": true}
})";
}

bool mentions(const std::vector<std::string>& diags, const std::string& what)
{
  for (const auto& d : diags)
    if (d.find(what) != std::string::npos)
      return true;
  return false;
}

std::string slurp(const fs::path& p)
{
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

fs::path scratch(const std::string& name)
{
  auto p = fs::temp_directory_path() / ("wlfreq_test_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_SUITE("experiment") {

TEST_CASE("bundled configs validate")
{
  REQUIRE(bundled_configs().size() >= 6);
  for (const auto& b : bundled_configs()) {
    INFO(b.name);
    const auto parsed = parse_config(b.text);
    CHECK(parsed.diagnostics.empty());
    CHECK(parsed.config.has_value());
    CHECK(validate_config(b.name).empty());
  }
}

TEST_CASE("config parsing")
{
  const auto p = parse_config(kSmall);
  REQUIRE(p.config);
  CHECK(p.config->estimator == EstimatorMode::nss);
  CHECK(p.config->scenario.sample_count() == 300);
  CHECK(p.config->tuning.snr_db == 30.0);

  const auto n = parse_config(network_config("[4, 6]"));
  REQUIRE(n.config);
  CHECK(n.config->topology->size() == 7);
  CHECK(n.config->bridges->is_bridge(6));

  const auto a = parse_config(network_config("\"auto\""));
  REQUIRE(a.config);
  CHECK(a.config->bridges_auto);
}

TEST_CASE("config diagnostics")
{
  SUBCASE("adjacent bridges name the edge")
  {
    const auto p = parse_config(network_config("[2, 4, 6]"));
    CHECK_FALSE(p.config);
    CHECK(mentions(p.diagnostics, "2-4"));
  }
  SUBCASE("undominated node is named")
  {
    const auto p = parse_config(network_config("[4]"));
    CHECK_FALSE(p.config);
    CHECK(mentions(p.diagnostics, "node 5"));
  }
  SUBCASE("scenario gap")
  {
    std::string text = kSmall;
    text.replace(text.find("\"start_s\": 0,"), 13, "\"start_s\": 0.1,");
    const auto p = parse_config(text);
    CHECK(mentions(p.diagnostics, "gap in coverage from 0 s to 0.1 s"));
  }
  SUBCASE("unknown field carries its path")
  {
    std::string text = kSmall;
    text.replace(text.find("\"frequency_hz\""), 14, "\"frequency\"");
    const auto p = parse_config(text);
    CHECK(mentions(p.diagnostics, "scenario.segments[0].frequency"));
  }
  SUBCASE("bad estimator")
  {
    std::string text = kSmall;
    text.replace(text.find("\"nss\""), 5, "\"pll\"");
    CHECK(mentions(parse_config(text).diagnostics, "estimator"));
  }
  SUBCASE("malformed json")
  {
    CHECK_FALSE(parse_config("{").diagnostics.empty());
  }
  SUBCASE("comments are accepted")
  {
    std::string text = kSmall;
    text.insert(1, "\n  // note\n  /* block */\n");
    CHECK(parse_config(text).diagnostics.empty());
  }
}

TEST_CASE("missing config")
{
  CHECK_THROWS_AS(load_config_text("no_such_config_anywhere"), ConfigError);
  CHECK_FALSE(validate_config("no_such_config_anywhere").empty());
}

TEST_CASE("output directory precedence")
{
  auto cfg = *parse_config(kSmall).config;
  ::unsetenv(kOutDirEnv);
  CHECK(resolve_output_dir(cfg, {}) == "out/small");
  cfg.output_dir = "from_config";
  CHECK(resolve_output_dir(cfg, {}) == "from_config");
  ::setenv(kOutDirEnv, "from_env", 1);
  CHECK(resolve_output_dir(cfg, {}) == "from_env");
  RunOverrides o;
  o.out_dir = "from_flag";
  CHECK(resolve_output_dir(cfg, o) == "from_flag");
  ::unsetenv(kOutDirEnv);
}

TEST_CASE("single-node run artifacts and determinism")
{
  const auto cfg = *parse_config(kSmall).config;
  const auto d1 = scratch("single_a");
  const auto d2 = scratch("single_b");
  RunOverrides o;
  o.out_dir = d1.string();
  const auto m = run_experiment(cfg, kSmall, o);
  o.out_dir = d2.string();
  run_experiment(cfg, kSmall, o);

  CHECK(m.config_hash == fnv1a_hex(kSmall));
  for (const char* f : {"trace.csv", "mse_report.csv", "manifest.json"}) {
    INFO(f);
    CHECK(std::find(m.files.begin(), m.files.end(), f) != m.files.end());
  }
  for (const auto& f : m.files) {
    INFO(f);
    REQUIRE(fs::exists(d1 / f));
    if (f != "manifest.json")
      CHECK(slurp(d1 / f) == slurp(d2 / f));
  }
  const auto manifest = nlohmann::json::parse(slurp(d1 / "manifest.json"));
  CHECK(manifest["config_name"] == "small");
  CHECK(manifest["files"].size() == m.files.size());
}

TEST_CASE("seed sweep")
{
  const auto cfg = *parse_config(kSmall).config;
  const auto d = scratch("sweep");
  RunOverrides o;
  o.out_dir = d.string();
  o.seeds = 4;
  o.seed = 10;
  o.threads = 2;
  const auto m = run_experiment(cfg, kSmall, o);
  CHECK(m.seeds == 4);
  REQUIRE(fs::exists(d / "sweep.csv"));
  std::istringstream is(slurp(d / "sweep.csv"));
  std::string line;
  int rows = 0;
  std::getline(is, line);
  CHECK(line == "seed,node,mse_hz2,mean_error_hz");
  while (std::getline(is, line))
    ++rows;
  CHECK(rows == 4);

  const auto d2 = scratch("sweep_serial");
  o.out_dir = d2.string();
  o.threads = 1;
  run_experiment(cfg, kSmall, o);
  CHECK(slurp(d / "sweep.csv") == slurp(d2 / "sweep.csv"));
}

TEST_CASE("network run artifacts")
{
  const auto text = network_config("[4, 6]");
  const auto cfg = *parse_config(text).config;
  const auto d = scratch("network");
  RunOverrides o;
  o.out_dir = d.string();
  const auto m = run_experiment(cfg, text, o);
  for (int id = 1; id <= 7; ++id)
    CHECK(fs::exists(d / ("trace_node" + std::to_string(id) + ".csv")));
  std::istringstream is(slurp(d / "mse_report.csv"));
  std::string line;
  std::getline(is, line);
  CHECK(line == "node,empirical_mse_hz2,theoretical_trace,bound_ok");
  int rows = 0;
  while (std::getline(is, line)) {
    ++rows;
    CHECK(line.find("nan") == std::string::npos);
    CHECK(line.substr(line.rfind(',') + 1) == "true");
  }
  CHECK(rows == 7);
  CHECK(m.estimator == "dfe");
}

}  // TEST_SUITE
