// SPDX-License-Identifier: Apache-2.0
#include <pybind11/complex.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "wlfreq/analysis.hpp"
#include "wlfreq/error.hpp"
#include "wlfreq/experiment.hpp"

namespace py = pybind11;
using namespace wlfreq;

namespace {

py::array_t<double> to_array(const std::vector<double>& v)
{
  py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

ExperimentConfig load(const std::string& path_or_name)
{
  auto parsed = parse_config(load_config_text(path_or_name));
  if (!parsed.config)
    throw ConfigError(parsed.diagnostics.front());
  return *parsed.config;
}

std::vector<ClarkeSample> clarke_of(const ExperimentConfig& cfg, std::uint64_t seed)
{
  return clarke(generate(cfg.scenario, seed, cfg.tuning.snr_db));
}

ModelKind model_of(EstimatorMode m)
{
  switch (m) {
    case EstimatorMode::lss: return ModelKind::lss;
    case EstimatorMode::wlss: return ModelKind::wlss;
    case EstimatorMode::nss: return ModelKind::nss;
    default: throw ConfigError("estimator '" + to_string(m) + "' is a network mode");
  }
}

}  // namespace

PYBIND11_MODULE(_wlfreq, m)
{
  m.doc() = "Three-phase frequency estimation with augmented complex Kalman filters";
  m.attr("__version__") = WLFREQ_VERSION;

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def("list_experiments", [] {
    std::vector<std::string> names;
    for (const auto& b : bundled_configs())
      names.emplace_back(b.name);
    return names;
  });

  m.def("validate", &validate_config, py::arg("config"),
        "Diagnostics for a config file or bundled experiment name; empty when valid.");

  m.def(
      "run",
      [](const std::string& config, std::optional<std::uint64_t> seed,
         std::optional<std::size_t> seeds, std::optional<std::string> out_dir) {
        RunOverrides o;
        o.seed = seed;
        o.seeds = seeds;
        o.out_dir = out_dir;
        const auto man = run_experiment(config, o);
        py::dict d;
        d["config_name"] = man.config_name;
        d["config_hash"] = man.config_hash;
        d["seed"] = man.seed;
        d["seeds"] = man.seeds;
        d["estimator"] = man.estimator;
        d["output_dir"] = man.output_dir;
        d["files"] = man.files;
        return d;
      },
      py::arg("config"), py::arg("seed") = py::none(), py::arg("seeds") = py::none(),
      py::arg("out_dir") = py::none(), "Runs an experiment and returns its manifest.");

  m.def(
      "clarke_samples",
      [](const std::string& config, std::optional<std::uint64_t> seed) {
        const auto cfg = load(config);
        const auto obs = clarke_of(cfg, seed.value_or(cfg.seed));
        py::array_t<std::complex<double>> out(static_cast<py::ssize_t>(obs.size()));
        auto* p = out.mutable_data();
        for (const auto& c : obs)
          *p++ = c.v;
        return out;
      },
      py::arg("config"), py::arg("seed") = py::none(),
      "Complex Clarke voltage of the configured scenario.");

  m.def(
      "estimate",
      [](const std::string& config, std::optional<std::uint64_t> seed,
         std::optional<std::string> estimator) {
        const auto cfg = load(config);
        EstimatorMode mode = cfg.estimator;
        if (estimator) {
          auto parsed = parse_estimator_mode(*estimator);
          if (!parsed)
            throw ConfigError("unknown estimator '" + *estimator + "'");
          mode = *parsed;
        }
        const auto tr = run_estimator(model_of(mode), clarke_of(cfg, seed.value_or(cfg.seed)),
                                      cfg.sample_rate_hz, cfg.tuning);
        return py::make_tuple(to_array(tr.f_hat()), to_array(increment_frequency(cfg.scenario)));
      },
      py::arg("config"), py::arg("seed") = py::none(), py::arg("estimator") = py::none(),
      "Single-node frequency estimate and true frequency, in Hz.");

  m.def(
      "estimate_network",
      [](const std::string& config, std::optional<std::uint64_t> seed) {
        const auto cfg = load(config);
        if (!cfg.topology)
          throw ConfigError("config has no network section");
        const auto r = run_distributed(*cfg.topology, network_scenarios(cfg),
                                       distributed_config(cfg, seed.value_or(cfg.seed)));
        py::dict est, truth;
        for (const auto& [id, tr] : r.traces) {
          est[py::int_(id)] = to_array(tr.f_hat());
          truth[py::int_(id)] = to_array(r.f_true.at(id));
        }
        return py::make_tuple(est, truth);
      },
      py::arg("config"), py::arg("seed") = py::none(),
      "Per-node frequency estimates and true frequencies of a network experiment.");

  m.def(
      "sequence_components",
      [](double va, double vb, double vc, double phi) {
        const auto s = wlfreq::sequence_components(va, vb, vc, phi);
        return py::make_tuple(s.positive, s.negative);
      },
      py::arg("va"), py::arg("vb"), py::arg("vc"), py::arg("phi") = 0.0,
      "Positive and negative sequence phasors of the Clarke voltage.");

  m.def(
      "error_spectrum",
      [](const std::vector<double>& error, double fs) {
        const auto s = wlfreq::error_spectrum(error, fs, {0, error.size()});
        return py::make_tuple(to_array(s.freq_hz), to_array(s.magnitude), s.peak_freq_hz);
      },
      py::arg("error"), py::arg("fs"), "Spectrum magnitude of a detrended error series.");
}
