// SPDX-License-Identifier: Apache-2.0
#include "wlfreq/estimators.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

#include "wlfreq/csv.hpp"
#include "wlfreq/error.hpp"

namespace wlfreq {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kMaxInnovationCondition = 1e12;
constexpr double kModulusTolerance = 1e-2;

AugmentedMatrix diag_noise(std::initializer_list<double> entries)
{
  Eigen::VectorXd d(static_cast<Eigen::Index>(entries.size()));
  Eigen::Index i = 0;
  for (double e : entries)
    d(i++) = e;
  return AugmentedMatrix::diagonal(d);
}

AugmentedMatrix observation_noise(const FilterTuning& tuning)
{
  return diag_noise({tuning.observation_variance()});
}

CMat hermitian_part(const CMat& m)
{
  return (m + m.adjoint()) / 2.0;
}

std::uint32_t modulus_flag(cd x)
{
  return std::abs(std::abs(x) - 1.0) > kModulusTolerance ? kModulusDrift : 0u;
}

}  // namespace

std::string to_string(ModelKind kind)
{
  switch (kind) {
  case ModelKind::lss: return "lss";
  case ModelKind::wlss: return "wlss";
  case ModelKind::nss: return "nss";
  case ModelKind::shared_increment: return "shared";
  }
  return "unknown";
}

std::optional<ModelKind> parse_model_kind(const std::string& name)
{
  if (name == "lss") return ModelKind::lss;
  if (name == "wlss") return ModelKind::wlss;
  if (name == "nss") return ModelKind::nss;
  if (name == "shared") return ModelKind::shared_increment;
  return std::nullopt;
}

double FilterTuning::observation_variance() const
{
  if (cn_override)
    return *cn_override;
  if (snr_db)
    return 2.0 * phase_noise_variance(*snr_db);
  return cn_floor;
}

FreqEstimate frequency_from_increment(cd x, double fs)
{
  if (x == cd(0.0, 0.0))
    return {std::numeric_limits<double>::quiet_NaN(), kFreqUndefined};
  return {std::arg(x) * fs / kTwoPi, modulus_flag(x)};
}

FreqEstimate frequency_from_wl_weights(cd h, cd g, double fs)
{
  FreqEstimate out;
  const double im_h = h.imag();
  double radicand = im_h * im_h - std::norm(g);
  if (radicand < 0.0) {
    radicand = 0.0;
    out.flags |= kSequenceDominanceViolated;
  }
  if (im_h < 0.0)
    out.flags |= kNegativeBranch;
  const cd j(0.0, 1.0);
  const cd a = -j * im_h + j * std::sqrt(radicand);
  double s = (h + a).imag();
  if (s > 1.0) {
    s = 1.0;
    out.flags |= kArcsinClamped;
  }
  out.hz = std::asin(s) * fs / kTwoPi;
  return out;
}

StateSpaceModel lss_model(double fs, const FilterTuning& tuning)
{
  StateSpaceModel m;
  m.name = "L-SS";
  m.kind = ModelKind::lss;
  m.n_states = 2;
  m.sample_rate_hz = fs;
  m.strictly_linear = true;
  m.evolve = [](const CVec& s) {
    CVec out(2);
    out << s(0), s(0) * s(1);
    return out;
  };
  m.jacobian = [](const CVec& s) {
    CMat j11(2, 2);
    j11 << 1.0, 0.0, s(1), s(0);
    return AugmentedMatrix(j11, CMat::Zero(2, 2));
  };
  m.observe = [](const CVec&) {
    CMat h(1, 2);
    h << 0.0, 1.0;
    return AugmentedMatrix(h, CMat::Zero(1, 2));
  };
  m.extract_freq = [fs](const CVec& s) { return frequency_from_increment(s(0), fs); };
  m.Cu = diag_noise({tuning.cu_increment, tuning.cu_voltage});
  m.Cn = observation_noise(tuning);
  return m;
}

StateSpaceModel wlss_model(double fs, const FilterTuning& tuning)
{
  StateSpaceModel m;
  m.name = "WL-SS";
  m.kind = ModelKind::wlss;
  m.n_states = 3;
  m.sample_rate_hz = fs;
  m.evolve = [](const CVec& s) {
    CVec out(3);
    out << s(0), s(1), s(0) * s(2) + s(1) * std::conj(s(2));
    return out;
  };
  m.jacobian = [](const CVec& s) {
    CMat j11 = CMat::Zero(3, 3);
    CMat j12 = CMat::Zero(3, 3);
    j11(0, 0) = 1.0;
    j11(1, 1) = 1.0;
    j11(2, 0) = s(2);
    j11(2, 1) = std::conj(s(2));
    j11(2, 2) = s(0);
    j12(2, 2) = s(1);
    return AugmentedMatrix(j11, j12);
  };
  m.observe = [](const CVec&) {
    CMat h(1, 3);
    h << 0.0, 0.0, 1.0;
    return AugmentedMatrix(h, CMat::Zero(1, 3));
  };
  m.extract_freq = [fs](const CVec& s) { return frequency_from_wl_weights(s(0), s(1), fs); };
  m.Cu = diag_noise({tuning.cu_increment, tuning.cu_increment, tuning.cu_voltage});
  m.Cn = observation_noise(tuning);
  return m;
}

StateSpaceModel nss_model(double fs, const FilterTuning& tuning)
{
  StateSpaceModel m;
  m.name = "N-SS";
  m.kind = ModelKind::nss;
  m.n_states = 3;
  m.sample_rate_hz = fs;
  m.evolve = [](const CVec& s) {
    CVec out(3);
    out << s(0), s(0) * s(1), std::conj(s(0)) * s(2);
    return out;
  };
  m.jacobian = [](const CVec& s) {
    CMat j11 = CMat::Zero(3, 3);
    CMat j12 = CMat::Zero(3, 3);
    j11(0, 0) = 1.0;
    j11(1, 0) = s(1);
    j11(1, 1) = s(0);
    j11(2, 2) = std::conj(s(0));
    j12(2, 0) = s(2);
    return AugmentedMatrix(j11, j12);
  };
  m.observe = [](const CVec&) {
    CMat h(1, 3);
    h << 0.0, 1.0, 1.0;
    return AugmentedMatrix(h, CMat::Zero(1, 3));
  };
  m.extract_freq = [fs](const CVec& s) { return frequency_from_increment(s(0), fs); };
  m.Cu = diag_noise({tuning.cu_increment, tuning.cu_voltage, tuning.cu_voltage});
  m.Cn = observation_noise(tuning);
  return m;
}

StateSpaceModel shared_increment_model(double fs, const FilterTuning& tuning)
{
  StateSpaceModel m;
  m.name = "shared";
  m.kind = ModelKind::shared_increment;
  m.n_states = 1;
  m.sample_rate_hz = fs;
  m.evolve = [](const CVec& s) { return s; };
  m.jacobian = [](const CVec&) { return AugmentedMatrix::identity(1); };
  m.extract_freq = [fs](const CVec& s) { return frequency_from_increment(s(0), fs); };
  m.Cu = diag_noise({tuning.cu_increment});
  m.Cn = observation_noise(tuning);
  return m;
}

StateSpaceModel make_model(ModelKind kind, double fs, const FilterTuning& tuning)
{
  switch (kind) {
  case ModelKind::lss: return lss_model(fs, tuning);
  case ModelKind::wlss: return wlss_model(fs, tuning);
  case ModelKind::nss: return nss_model(fs, tuning);
  case ModelKind::shared_increment: return shared_increment_model(fs, tuning);
  }
  throw Error("unknown model kind");
}

FilterState initial_state(const StateSpaceModel& model, cd first_observation,
                          const FilterTuning& tuning)
{
  const cd increment = std::polar(1.0, kTwoPi * tuning.f_nominal_hz / model.sample_rate_hz);
  CVec x = CVec::Zero(model.n_states);
  switch (model.kind) {
  case ModelKind::lss:
    x << increment, first_observation;
    break;
  case ModelKind::wlss:
    x << increment, 0.0, first_observation;
    break;
  case ModelKind::nss:
    x << increment, first_observation, 0.0;
    break;
  case ModelKind::shared_increment:
    x << increment;
    break;
  }
  FilterState st;
  st.x = AugmentedVector(std::move(x));
  st.M = AugmentedMatrix(tuning.m0 * CMat::Identity(model.n_states, model.n_states),
                         CMat::Zero(model.n_states, model.n_states));
  st.k = 0;
  return st;
}

FilterState acekf_step(const StateSpaceModel& model, const FilterState& st,
                       const AugmentedVector& y, StepRecord* record)
{
  if (!model.observe)
    throw Error(model.name + ": model needs an externally supplied observation matrix");
  const CVec prior_top = model.evolve(st.x.top());
  return acekf_step(model, st, y, model.observe(prior_top), record);
}

FilterState acekf_step(const StateSpaceModel& model, const FilterState& st,
                       const AugmentedVector& y, const AugmentedMatrix& H,
                       StepRecord* record)
{
  const long k = st.k + 1;
  const Eigen::Index n = model.n_states;
  if (H.cols() != n || H.rows() != y.size())
    throw Error(model.name + ": observation dimensions do not match the model");

  // Predict.
  const CVec prior_top = model.evolve(st.x.top());
  const AugmentedMatrix A = model.jacobian(st.x.top());
  const CMat A2 = A.materialize();
  const CMat M_prior2 = hermitian_part(A2 * st.M.materialize() * A2.adjoint() +
                                       model.Cu.materialize());
  const AugmentedMatrix M_prior = enforce_structure(M_prior2);

  // Gain.
  const CMat H2 = H.materialize();
  const CMat S = hermitian_part(H2 * M_prior2 * H2.adjoint() + model.Cn.materialize());
  if (!S.allFinite())
    throw FilterDegenerateError("filter degenerate: non-finite innovation covariance", k);
  const Eigen::JacobiSVD<CMat> svd(S);
  const auto& sv = svd.singularValues();
  const double smin = sv(sv.size() - 1);
  if (!(smin > 0.0) || sv(0) / smin > kMaxInnovationCondition)
    throw FilterDegenerateError("filter degenerate: singular innovation covariance", k);
  // G = M H^H S^-1 = (S^-1 H M)^H since S and M are Hermitian.
  const CMat G2 = S.partialPivLu().solve(H2 * M_prior2).adjoint();

  // Update.
  const CVec prior2 = AugmentedVector(prior_top).materialize();
  const CVec innovation = y.materialize() - H2 * prior2;
  const CVec post2 = prior2 + G2 * innovation;
  CMat M_post2 = hermitian_part((CMat::Identity(2 * n, 2 * n) - G2 * H2) * M_prior2);

  FilterState out;
  try {
    out.x = AugmentedVector::from_materialized(post2);
    out.M = enforce_structure(M_post2);
  } catch (const StructureError& e) {
    throw FilterDegenerateError(std::string("filter degenerate: ") + e.what(), k);
  }
  if (model.strictly_linear)
    out.M.block12().setZero();
  out.k = k;

  if (record) {
    record->A = A;
    record->H = H;
    record->M_prior = M_prior;
    record->M_post = out.M;
    record->G = enforce_structure(G2, 1e-6);
    record->innovation = innovation(0);
  }
  return out;
}

std::vector<double> FreqTrace::f_hat() const
{
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records)
    out.push_back(r.f_hat_hz);
  return out;
}

FreqTrace run_filter(const StateSpaceModel& model, std::span<const ClarkeSample> samples,
                     const FilterState& init, std::vector<StepRecord>* records)
{
  if (samples.empty())
    throw Error("run_filter: no samples");
  FreqTrace trace;
  trace.sample_rate_hz = model.sample_rate_hz;
  trace.records.reserve(samples.size());
  if (records) {
    records->clear();
    records->reserve(samples.size());
  }

  const double dt = 1.0 / model.sample_rate_hz;
  auto push = [&](const FilterState& st, double innov_power) {
    const auto est = model.extract_freq(st.x.top());
    trace.records.push_back(
        {st.k, static_cast<double>(st.k) * dt, est.hz, innov_power, est.flags, st.x.top()});
  };

  FilterState st = init;
  st.k = 0;
  push(st, 0.0);
  for (std::size_t i = 1; i < samples.size(); ++i) {
    CVec obs(1);
    obs << samples[i].v;
    StepRecord rec;
    st = acekf_step(model, st, AugmentedVector(obs), &rec);
    push(st, std::norm(rec.innovation));
    if (records)
      records->push_back(std::move(rec));
  }
  return trace;
}

FreqTrace run_estimator(ModelKind kind, std::span<const ClarkeSample> samples, double fs,
                        const FilterTuning& tuning)
{
  if (samples.empty())
    throw Error("run_estimator: no samples");
  const StateSpaceModel model = make_model(kind, fs, tuning);
  return run_filter(model, samples, initial_state(model, samples.front().v, tuning));
}

void write_trace_csv(std::ostream& os, const FreqTrace& trace, std::span<const double> f_true)
{
  const double nan = std::numeric_limits<double>::quiet_NaN();
  os << "k,t_s,f_hat_hz,f_true_hz,err_hz,innov_power,flags\n";
  for (std::size_t i = 0; i < trace.records.size(); ++i) {
    const auto& r = trace.records[i];
    const double truth = i < f_true.size() ? f_true[i] : nan;
    os << r.k << ',' << format_double(r.t_s) << ',' << format_double(r.f_hat_hz) << ','
       << format_double(truth) << ',' << format_double(r.f_hat_hz - truth) << ','
       << format_double(r.innovation_power) << ',' << r.flags << '\n';
  }
}

}  // namespace wlfreq
