// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <doctest.h>

#include "wlfreq/analysis.hpp"
#include "wlfreq/error.hpp"

using namespace wlfreq;
using std::numbers::pi;

namespace {

constexpr double kFs = 1000.0;

FreqTrace constant_trace(std::size_t n, double f)
{
  FreqTrace t;
  for (std::size_t k = 0; k < n; ++k)
    t.records.push_back({static_cast<long>(k), static_cast<double>(k) / kFs, f, 0.0, 0, {}});
  return t;
}

StepRecord scalar_record(double m_prior, double m_post)
{
  StepRecord r;
  r.A = AugmentedMatrix::identity(1);
  r.H = AugmentedMatrix::identity(1);
  r.M_prior = AugmentedMatrix(CMat::Constant(1, 1, m_prior), CMat::Zero(1, 1));
  r.M_post = AugmentedMatrix(CMat::Constant(1, 1, m_post), CMat::Zero(1, 1));
  r.G = AugmentedMatrix(CMat::Constant(1, 1, m_post / m_prior), CMat::Zero(1, 1));
  return r;
}

CombinationOperator single_node_op(NodeId id)
{
  return {{id}, Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Identity(1, 1)};
}

double min_eigenvalue(const CMat& m)
{
  return Eigen::SelfAdjointEigenSolver<CMat>(m).eigenvalues().minCoeff();
}

}  // namespace

TEST_SUITE("analysis") {

TEST_CASE("empirical mse")
{
  const std::vector<double> truth(100, 50.0);
  const std::map<NodeId, FreqTrace> exact{{1, constant_trace(100, 50.0)}};
  CHECK(empirical_mse(exact, truth, {0, 100}).at(1).empirical_mse_hz2 == 0.0);

  const std::map<NodeId, FreqTrace> offset{{1, constant_trace(100, 50.1)}};
  CHECK(empirical_mse(offset, truth, {10, 100}).at(1).empirical_mse_hz2 ==
        doctest::Approx(0.01));

  const double e = 0.25;
  std::vector<MseReport> runs{
      empirical_mse({{1, constant_trace(100, 50.0 + e)}}, truth, {0, 100}),
      empirical_mse({{1, constant_trace(100, 50.0 - e)}}, truth, {0, 100})};
  const auto mc = monte_carlo_mse(runs);
  CHECK(mc.at(1).empirical_mse_hz2 == doctest::Approx(e * e));
  CHECK(mc.at(1).runs == 2);
  CHECK(mc.at(1).standard_error == doctest::Approx(0.0));

  CHECK_THROWS_AS(empirical_mse(exact, truth, {5, 5}), std::invalid_argument);
  CHECK_THROWS_AS(empirical_mse(exact, truth, {0, 101}), std::invalid_argument);
}

TEST_CASE("mse csv")
{
  MseReport r;
  r.nodes.push_back({3, 0.01, 0.0, 1, 2.5e-6, true});
  std::ostringstream os;
  write_mse_csv(os, r);
  CHECK(os.str() == "node,empirical_mse_hz2,theoretical_trace,bound_ok\n3,0.01,2.5e-06,true\n");
}

TEST_CASE("mean error recursion")
{
  const auto op = single_node_op(1);
  std::map<NodeId, StepRecord> rec{{1, scalar_record(2.0, 1.0)}};

  std::map<NodeId, AugmentedVector> zero{{1, AugmentedVector(CVec::Zero(1))}};
  CHECK(mean_error_step(zero, op, rec).at(1)[0] == cd(0.0));

  std::map<NodeId, AugmentedVector> e{{1, AugmentedVector(CVec::Constant(1, cd(0.4, -0.2)))}};
  for (int k = 0; k < 4; ++k) {
    const auto next = mean_error_step(e, op, rec);
    CHECK(std::abs(next.at(1)[0] - e.at(1)[0] / 2.0) < 1e-15);
    e = next;
  }

  rec[1].M_prior = AugmentedMatrix::zero(1, 1);
  CHECK_THROWS_AS(mean_error_step(e, op, rec), Error);
}

TEST_CASE("mean error recursion tracks a Monte-Carlo DFE run")
{
  // Three nodes on a path with the middle one as bridge, unbiased prior and
  // high SNR so that the auxiliary voltage estimates are close to exact.
  const Topology t({1, 2, 3}, {{1, 2}, {2, 3}});
  const BridgeAssignment b{{2}};
  const auto s = Scenario::steady(50.0, {1, 1, 1}, {}, 0.051, kFs);
  std::map<NodeId, Scenario> scen{{1, s}, {2, s}, {3, s}};
  DistributedConfig cfg;
  cfg.bridges = b;
  cfg.tuning.snr_db = 60.0;
  cfg.tuning.f_nominal_hz = 50.0;

  const cd truth = std::polar(1.0, 2 * pi * 50.0 / kFs);
  const int seeds = 500;
  const std::size_t ticks = 51;
  std::vector<std::map<NodeId, std::vector<cd>>> errors(seeds);
  cfg.record_matrices = true;
  DistributedResult reference;
  for (int sd = 0; sd < seeds; ++sd) {
    cfg.seed = static_cast<std::uint64_t>(sd + 1000);
    auto r = run_distributed(t, scen, cfg);
    for (NodeId id : t.nodes())
      for (std::size_t k = 0; k < ticks; ++k)
        errors[sd][id].push_back(r.traces.at(id).records[k].state(0) - truth);
    if (sd == 0)
      reference = std::move(r);
  }

  const auto op = combination_operator(t, b, DiffusionWeights::uniform(t, b),
                                       DiffusionStrategy::bridge);
  std::map<NodeId, AugmentedVector> mean;
  for (NodeId id : t.nodes())
    mean[id] = AugmentedVector(CVec::Constant(1, std::polar(1.0, 2 * pi * 50.0 / kFs) - truth));

  int outside = 0, total = 0;
  for (std::size_t k = 1; k < ticks; ++k) {
    mean = mean_error_step(mean, op, reference.records[k - 1]);
    for (NodeId id : t.nodes()) {
      for (int part = 0; part < 2; ++part) {
        double sum = 0.0, sq = 0.0;
        for (int sd = 0; sd < seeds; ++sd) {
          const cd e = errors[sd][id][k];
          const double v = part == 0 ? e.real() : e.imag();
          sum += v;
          sq += v * v;
        }
        const double m = sum / seeds;
        const double se = std::sqrt(std::max(0.0, sq / seeds - m * m) / (seeds - 1));
        const double predicted = part == 0 ? mean.at(id)[0].real() : mean.at(id)[0].imag();
        ++total;
        if (std::abs(m - predicted) > 3.0 * se)
          ++outside;
      }
    }
  }
  CHECK(outside <= std::max(2, total / 50));
}

TEST_CASE("mse recursion without noise stays at zero")
{
  const auto op = single_node_op(1);
  auto st = NetworkErrorState::block_diagonal({1}, {{1, AugmentedMatrix::zero(1, 1)}},
                                              AugmentedMatrix::zero(1, 1),
                                              AugmentedMatrix::zero(1, 1));
  std::map<NodeId, StepRecord> rec{{1, scalar_record(2.0, 1.0)}};
  const BridgeAssignment none;
  const Topology one({1}, {});
  for (int k = 0; k < 5; ++k) {
    const auto step = mse_step(st, op, rec, none, one);
    CHECK(step.Sigma.isZero());
  }
}

TEST_CASE("single-node recursion reproduces the filter covariance")
{
  FilterTuning tune;
  tune.snr_db = 30.0;
  const auto s = Scenario::steady(50.0, {0.2, 1, 1}, {}, 0.201, kFs);
  const auto obs = clarke(generate(s, 2, 30.0));
  for (ModelKind kind : {ModelKind::nss, ModelKind::wlss}) {
    const auto m = make_model(kind, kFs, tune);
    const FilterState init = initial_state(m, obs[0].v, tune);
    std::vector<StepRecord> recs;
    run_filter(m, obs, init, &recs);
    REQUIRE(recs.size() == 200);

    auto st = NetworkErrorState::block_diagonal({1}, {{1, init.M}}, m.Cu, m.Cn);
    const auto op = single_node_op(1);
    double worst = 0.0;
    for (const auto& r : recs) {
      const auto step = mse_step(st, op, {{1, r}}, {}, Topology({1}, {}));
      const CMat M = r.M_post.materialize();
      worst = std::max(worst, (step.Sigma - M).cwiseAbs().maxCoeff() / max_abs(M));
    }
    CHECK(worst < 1e-9);
  }
}

TEST_CASE("mse recursion on the reference network")
{
  const auto t = Topology::reference7();
  const BridgeAssignment b{{4, 6}};
  const auto s = Scenario::steady(50.0, {1, 1, 1}, {}, 0.201, kFs);
  std::map<NodeId, Scenario> scen;
  for (NodeId id : t.nodes())
    scen[id] = s;
  DistributedConfig cfg;
  cfg.bridges = b;
  cfg.tuning.snr_db = 30.0;
  cfg.record_matrices = true;
  const auto r = run_distributed(t, scen, cfg);
  const auto model = shared_increment_model(kFs, cfg.tuning);
  auto st = NetworkErrorState::block_diagonal(t.nodes(), r.initial_covariance, model.Cu, model.Cn);
  const auto op =
      combination_operator(t, b, DiffusionWeights::uniform(t, b), DiffusionStrategy::bridge);
  for (const auto& rec : r.records) {
    const auto step = mse_step(st, op, rec, b, t);
    CHECK(min_eigenvalue(st.E) >= -1e-12 * max_abs(st.E));
    CHECK((st.E - st.E.adjoint()).norm() == 0.0);
    for (NodeId id : t.nodes()) {
      CHECK(step.bound_ok.at(id));
      if (b.is_bridge(id))
        CHECK(std::abs(step.sigma_trace.at(id) - step.conventional_trace.at(id)) <=
              1e-12 * step.conventional_trace.at(id));
    }
  }
}

TEST_CASE("mse recursion converges for time-invariant inputs")
{
  const auto t = Topology::reference7();
  const BridgeAssignment b{{4, 6}};
  std::map<NodeId, StepRecord> rec;
  std::map<NodeId, AugmentedMatrix> init;
  for (NodeId id : t.nodes()) {
    rec[id] = scalar_record(1e-3, 0.6e-3);
    init[id] = AugmentedMatrix::identity(1);
  }
  const auto u = AugmentedMatrix::diagonal(Eigen::VectorXd::Constant(1, 1e-6));
  const auto g = AugmentedMatrix::diagonal(Eigen::VectorXd::Constant(1, 1e-3));
  auto st = NetworkErrorState::block_diagonal(t.nodes(), init, u, g);
  const auto op =
      combination_operator(t, b, DiffusionWeights::uniform(t, b), DiffusionStrategy::bridge);
  CMat prev = st.E;
  double delta = 1.0;
  for (int k = 0; k < 1000; ++k) {
    mse_step(st, op, rec, b, t);
    delta = (st.E - prev).norm();
    prev = st.E;
  }
  CHECK(delta < 1e-8);
}

TEST_CASE("mse_step rejects mismatched dimensions")
{
  const auto op = single_node_op(1);
  auto st = NetworkErrorState::block_diagonal({1}, {{1, AugmentedMatrix::identity(2)}},
                                              AugmentedMatrix::identity(2),
                                              AugmentedMatrix::identity(1));
  std::map<NodeId, StepRecord> rec{{1, scalar_record(2.0, 1.0)}};
  CHECK_THROWS_AS(mse_step(st, op, rec, {}, Topology({1}, {})), std::invalid_argument);
}

TEST_CASE("error spectrum")
{
  SUBCASE("sinusoid")
  {
    std::vector<double> e(1024);
    for (std::size_t k = 0; k < e.size(); ++k)
      e[k] = 0.3 * std::sin(2 * pi * 100.0 * static_cast<double>(k) / kFs) + 0.01 * k;
    const auto s = error_spectrum(e, kFs, {0, 1024});
    CHECK(std::abs(s.peak_freq_hz - 100.0) <= kFs / 1024);
  }
  SUBCASE("white noise has no dominant bin")
  {
    std::mt19937_64 rng(99);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<double> e(1024);
      for (auto& v : e)
        v = g(rng);
      const auto s = error_spectrum(e, kFs, {0, 1024});
      std::vector<double> mag(s.magnitude.begin() + 1, s.magnitude.end());
      std::nth_element(mag.begin(), mag.begin() + mag.size() / 2, mag.end());
      const double median = mag[mag.size() / 2];
      CHECK(std::sqrt(s.peak_power) < 5.0 * median);
    }
  }
  SUBCASE("window checks")
  {
    std::vector<double> e(600, 0.0);
    CHECK_THROWS_AS(error_spectrum(e, kFs, {0, 511}), std::invalid_argument);
    CHECK_THROWS_AS(error_spectrum(e, kFs, {0, 700}), std::invalid_argument);
  }
  SUBCASE("csv")
  {
    std::vector<double> e(512, 0.0);
    std::ostringstream os;
    write_spectrum_csv(os, error_spectrum(e, kFs, {0, 512}));
    CHECK(os.str().rfind("freq_hz,power\n0,0\n", 0) == 0);
  }
}

TEST_CASE("L-SS error oscillates at twice the system frequency")
{
  FilterTuning tune;
  tune.snr_db = 30.0;
  const auto s = Scenario::steady(50.0, {0.2, 1, 1}, {}, 2.0, kFs);
  const auto tr = run_estimator(ModelKind::lss, clarke(generate(s, 1, 30.0)), kFs, tune);
  const auto sp = error_spectrum(tr, increment_frequency(s), {500, 2000});
  CHECK(std::abs(sp.peak_freq_hz - 100.0) <= 2.0);
}

}  // TEST_SUITE
