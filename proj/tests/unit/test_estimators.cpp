// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <doctest.h>

#include "wlfreq/error.hpp"
#include "wlfreq/estimators.hpp"

using namespace wlfreq;
using std::numbers::pi;

namespace {

constexpr double kFs = 1000.0;

CVec random_state(Eigen::Index n, std::mt19937_64& rng)
{
  std::normal_distribution<double> g;
  CVec x(n);
  for (Eigen::Index i = 0; i < n; ++i)
    x(i) = cd(g(rng), g(rng));
  return x;
}

// Wirtinger derivatives by central differences, treating x and conj(x) as
// independent: df/dx = (D_re - j D_im) / 2, df/dx* = (D_re + j D_im) / 2.
AugmentedMatrix numeric_jacobian(const StateSpaceModel& m, const CVec& x)
{
  const double h = 1e-6;
  const Eigen::Index n = x.size();
  CMat j11(n, n), j12(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    CVec xp = x, xm = x, xi = x, xim = x;
    xp(i) += h;
    xm(i) -= h;
    xi(i) += cd(0, h);
    xim(i) -= cd(0, h);
    const CVec dre = (m.evolve(xp) - m.evolve(xm)) / (2 * h);
    const CVec dim = (m.evolve(xi) - m.evolve(xim)) / (2 * h);
    j11.col(i) = (dre - cd(0, 1) * dim) / 2.0;
    j12.col(i) = (dre + cd(0, 1) * dim) / 2.0;
  }
  return {j11, j12};
}

Scenario steady(PhaseTriple amp, double duration = 1.0)
{
  return Scenario::steady(50.0, amp, {}, duration, kFs);
}

FreqTrace noiseless_run(ModelKind kind, const Scenario& s, FilterTuning tuning = {})
{
  return run_estimator(kind, clarke(generate(s, 0)), kFs, tuning);
}

double max_error_after(const FreqTrace& tr, std::size_t from, double f)
{
  double worst = 0.0;
  for (std::size_t k = from; k < tr.size(); ++k)
    worst = std::max(worst, std::abs(tr.records[k].f_hat_hz - f));
  return worst;
}

// One-state model with identity dynamics and observation.
StateSpaceModel scalar_model(double cu, double cn)
{
  StateSpaceModel m;
  m.name = "scalar";
  m.kind = ModelKind::shared_increment;
  m.n_states = 1;
  m.evolve = [](const CVec& s) { return s; };
  m.jacobian = [](const CVec&) { return AugmentedMatrix::identity(1); };
  m.observe = [](const CVec&) { return AugmentedMatrix::identity(1); };
  m.extract_freq = [](const CVec& s) { return frequency_from_increment(s(0), kFs); };
  m.Cu = AugmentedMatrix::diagonal(Eigen::VectorXd::Constant(1, cu));
  m.Cn = AugmentedMatrix::diagonal(Eigen::VectorXd::Constant(1, cn));
  return m;
}

}  // namespace

TEST_SUITE("estimators") {

TEST_CASE("frequency from phase increment")
{
  CHECK(frequency_from_increment(std::polar(1.0, 2 * pi * 50 / kFs), kFs).hz ==
        doctest::Approx(50.0));
  CHECK(frequency_from_increment(std::polar(1.0, -2 * pi * 50 / kFs), kFs).hz ==
        doctest::Approx(-50.0));
  CHECK(frequency_from_increment(1.0, kFs).hz == 0.0);
  const auto z = frequency_from_increment(0.0, kFs);
  CHECK(std::isnan(z.hz));
  CHECK((z.flags & kFreqUndefined) != 0);
  CHECK((frequency_from_increment(1.1, kFs).flags & kModulusDrift) != 0);
}

TEST_CASE("frequency from widely linear weights")
{
  const cd h = std::polar(1.0, 2 * pi * 50 / kFs);
  CHECK(frequency_from_wl_weights(h, 0.0, kFs).hz == doctest::Approx(50.0));
  CHECK(frequency_from_wl_weights(std::polar(1.0, pi / 6), 0.0, kFs).hz ==
        doctest::Approx(std::asin(0.5) / (2 * pi * 0.001)));
  CHECK(frequency_from_wl_weights(std::polar(1.0, pi / 6), 0.0, kFs).hz ==
        doctest::Approx(83.3333333333));

  const cd hb(0.9, 0.3);
  const auto edge = frequency_from_wl_weights(hb, 0.3, kFs);
  CHECK(edge.hz == doctest::Approx(0.0));
  CHECK((edge.flags & kSequenceDominanceViolated) == 0);

  const auto bad = frequency_from_wl_weights(hb, 0.5, kFs);
  CHECK((bad.flags & kSequenceDominanceViolated) != 0);
  CHECK(bad.hz == doctest::Approx(0.0));

  CHECK((frequency_from_wl_weights(cd(0.9, -0.1), 0.0, kFs).flags & kNegativeBranch) != 0);
}

TEST_CASE("widely linear extraction recovers f on an unbalanced signal")
{
  // v_{k+1} = h v_k + g v_k^* holds with these weights for A e^{jw} + B e^{-jw}.
  const double w = 2 * pi * 50 / kFs;
  const cd A = 0.9, B(0.2, -0.15);
  const cd ej = std::polar(1.0, w);
  const cd det = std::norm(A) - std::norm(B);
  const cd h = (std::norm(A) * ej - std::norm(B) * std::conj(ej)) / det;
  const cd g = A * B * (std::conj(ej) - ej) / det;
  CHECK(frequency_from_wl_weights(h, g, kFs).hz == doctest::Approx(50.0).epsilon(1e-9));
}

TEST_CASE("Jacobians match central differences")
{
  std::mt19937_64 rng(2);
  for (ModelKind kind : {ModelKind::lss, ModelKind::wlss, ModelKind::nss}) {
    const auto m = make_model(kind, kFs);
    for (int t = 0; t < 10; ++t) {
      const CVec x = random_state(m.n_states, rng);
      const auto an = m.jacobian(x);
      const auto nu = numeric_jacobian(m, x);
      const CMat a = an.materialize(), b = nu.materialize();
      CHECK((a - b).norm() <= 1e-6 * std::max(1.0, a.norm()));
    }
  }
}

TEST_CASE("scalar gain algebra")
{
  const auto m = scalar_model(0.0, 1.0);
  FilterState st;
  st.x = AugmentedVector(CVec::Constant(1, cd(0.3, 0.0)));
  st.M = AugmentedMatrix(CMat::Constant(1, 1, 2.0), CMat::Zero(1, 1));
  StepRecord rec;
  acekf_step(m, st, AugmentedVector(CVec::Constant(1, cd(1.0, 0.0))), &rec);
  CHECK(rec.G.block11()(0, 0).real() == doctest::Approx(2.0 / 3.0));
  CHECK(std::abs(rec.G.block12()(0, 0)) < 1e-15);
  CHECK(rec.M_post.block11()(0, 0).real() == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("small observation noise reproduces the true state")
{
  const double eps = 1e-10;
  const auto m = scalar_model(0.0, eps);
  FilterState st;
  st.x = AugmentedVector(CVec::Constant(1, cd(0.0, 0.0)));
  st.M = AugmentedMatrix(CMat::Identity(1, 1), CMat::Zero(1, 1));
  const cd truth(0.4, -0.7);
  const auto out = acekf_step(m, st, AugmentedVector(CVec::Constant(1, truth)));
  CHECK(std::abs(out.x[0] - truth) < 10 * eps);
}

TEST_CASE("L-SS from the true state stays on it")
{
  const auto s = steady({1, 1, 1}, 0.01);
  const auto obs = clarke(generate(s, 0));
  const auto m = lss_model(kFs);
  FilterState st = initial_state(m, obs[0].v);
  const auto next = acekf_step(m, st, AugmentedVector(CVec::Constant(1, obs[1].v)));
  CHECK(std::abs(next.x[0] - st.x[0]) < 1e-12);
  CHECK(std::abs(next.x[1] - obs[1].v) < 1e-12);
}

TEST_CASE("singular innovation covariance is reported")
{
  auto m = scalar_model(0.0, 0.0);
  m.observe = [](const CVec&) { return AugmentedMatrix::zero(1, 1); };
  FilterState st;
  st.x = AugmentedVector(CVec::Constant(1, cd(1.0, 0.0)));
  st.M = AugmentedMatrix::identity(1);
  st.k = 6;
  try {
    acekf_step(m, st, AugmentedVector(CVec::Constant(1, cd(1.0, 0.0))));
    FAIL("expected FilterDegenerateError");
  } catch (const FilterDegenerateError& e) {
    CHECK(e.tick() == 7);
    CHECK(std::string(e.what()).find("filter degenerate") != std::string::npos);
  }
}

TEST_CASE("N-SS converges from an off-nominal prior")
{
  FilterTuning t;
  t.f_nominal_hz = 49.0;
  const auto tr = noiseless_run(ModelKind::nss, steady({1, 1, 1}), t);
  CHECK(max_error_after(tr, 200, 50.0) < 1e-3);
  for (std::size_t k = 200; k < tr.size(); ++k)
    CHECK(std::abs(tr.records[k].state(2)) <= 1e-3 * std::abs(tr.records[k].state(1)));
}

TEST_CASE("N-SS separates the sequences of a sag")
{
  const auto tr = noiseless_run(ModelKind::nss, steady({0.2, 1, 1}));
  const auto& st = tr.records.back().state;
  CHECK(std::abs(st(2)) / std::abs(st(1)) == doctest::Approx(0.326599 / 0.898146).epsilon(0.01));
  CHECK(max_error_after(tr, 500, 50.0) < 1e-3);
  for (const auto& r : tr.records)
    CHECK((r.flags & (kSequenceDominanceViolated | kArcsinClamped)) == 0);
}

TEST_CASE("L-SS is exact on balanced input")
{
  const auto tr = noiseless_run(ModelKind::lss, steady({1, 1, 1}));
  CHECK(max_error_after(tr, 500, 50.0) < 1e-6);
}

TEST_CASE("WL-SS tracks an unbalanced system")
{
  const auto tr = noiseless_run(ModelKind::wlss, steady({0.2, 1, 1}, 2.0));
  CHECK(max_error_after(tr, 1500, 50.0) < 1e-3);
}

TEST_CASE("estimates keep the conjugate pair property")
{
  const auto s = steady({0.2, 1, 1}, 0.2);
  const auto obs = clarke(generate(s, 3, 20.0));
  for (ModelKind kind : {ModelKind::lss, ModelKind::wlss, ModelKind::nss}) {
    const auto m = make_model(kind, kFs);
    FilterState st = initial_state(m, obs[0].v);
    for (std::size_t k = 1; k < obs.size(); ++k) {
      st = acekf_step(m, st, AugmentedVector(CVec::Constant(1, obs[k].v)));
      const CMat M = st.M.materialize();
      CHECK(structure_deviation(M) == 0.0);
      CHECK((M - M.adjoint()).norm() < 1e-12);
    }
  }
}

TEST_CASE("run_filter")
{
  const auto s = steady({0.2, 1, 1}, 0.3);
  const auto obs = clarke(generate(s, 5, 30.0));
  const auto a = run_estimator(ModelKind::nss, obs, kFs);
  const auto b = run_estimator(ModelKind::nss, obs, kFs);
  REQUIRE(a.size() == obs.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(a.records[k].k == static_cast<long>(k));
    CHECK(a.records[k].f_hat_hz == b.records[k].f_hat_hz);
  }
  std::vector<StepRecord> recs;
  const auto m = nss_model(kFs);
  run_filter(m, obs, initial_state(m, obs[0].v), &recs);
  CHECK(recs.size() == obs.size() - 1);
}

TEST_CASE("observation variance")
{
  FilterTuning t;
  CHECK(t.observation_variance() == 1e-6);
  t.snr_db = 30.0;
  CHECK(t.observation_variance() == doctest::Approx(1e-3));
  t.cn_override = 0.5;
  CHECK(t.observation_variance() == 0.5);
}

TEST_CASE("trace csv")
{
  const auto tr = noiseless_run(ModelKind::nss, steady({1, 1, 1}, 0.005));
  std::ostringstream os;
  write_trace_csv(os, tr, {});
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "k,t_s,f_hat_hz,f_true_hz,err_hz,innov_power,flags");
  std::getline(is, line);
  CHECK(line == "0,0,50,nan,nan,0,0");
}

}  // TEST_SUITE
