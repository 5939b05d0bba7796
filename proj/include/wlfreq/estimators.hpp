// SPDX-License-Identifier: Apache-2.0
//
// Augmented complex extended Kalman filter and the state-space models it is
// run with:
//
//   L-SS   [x, v]            strictly linear, x = phase increment
//   WL-SS  [h, g, v | conj]  widely linear AR(1) weights
//   N-SS   [x, v+, v- | conj] counter-rotating sequence components
//   shared [x | conj]        phase increment only, H supplied per tick
//
// All models are described by their top half; the filter materializes the
// augmented 2n forms internally.

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wlfreq/augmented.hpp"
#include "wlfreq/signal.hpp"

namespace wlfreq {

enum class ModelKind { lss, wlss, nss, shared_increment };

std::string to_string(ModelKind kind);
std::optional<ModelKind> parse_model_kind(const std::string& name);

/// Per-tick diagnostic bits carried in FreqTrace and CSV output.
enum FreqFlag : std::uint32_t {
  kFreqUndefined = 1u << 0,               // phase increment estimate is zero
  kSequenceDominanceViolated = 1u << 1,   // WL-SS radicand was negative
  kNegativeBranch = 1u << 2,              // WL-SS Im(h) < 0
  kArcsinClamped = 1u << 3,               // WL-SS arcsin argument above 1
  kModulusDrift = 1u << 4,                // | |x| - 1 | > 1e-2
};

struct FreqEstimate {
  double hz = 0.0;
  std::uint32_t flags = 0;
};

/// Noise and initialization settings shared by all models.
struct FilterTuning {
  double cu_increment = 1e-6;   // state noise on phase-increment-like entries
  double cu_voltage = 1e-6;     // state noise on voltage entries
  double m0 = 0.1;              // initial error covariance scale
  double f_nominal_hz = 50.0;
  double cn_floor = 1e-6;       // observation variance when no SNR is given
  std::optional<double> snr_db;
  std::optional<double> cn_override;

  /// Variance of the complex Clarke-domain observation noise.
  double observation_variance() const;
};

struct StateSpaceModel {
  std::string name;
  ModelKind kind = ModelKind::nss;
  Eigen::Index n_states = 0;   // top-half dimension
  double sample_rate_hz = 1000.0;
  bool strictly_linear = false;

  std::function<CVec(const CVec&)> evolve;
  std::function<AugmentedMatrix(const CVec&)> jacobian;
  /// Observation matrix evaluated at the predicted state. Empty for models
  /// whose H is supplied by the caller.
  std::function<AugmentedMatrix(const CVec&)> observe;
  std::function<FreqEstimate(const CVec&)> extract_freq;

  AugmentedMatrix Cu;
  AugmentedMatrix Cn;
};

struct FilterState {
  AugmentedVector x;
  AugmentedMatrix M;
  long k = 0;
};

/// Quantities of one filter step kept for the error analysis.
struct StepRecord {
  AugmentedMatrix A;
  AugmentedMatrix H;
  AugmentedMatrix M_prior;
  AugmentedMatrix M_post;
  AugmentedMatrix G;
  cd innovation{0.0, 0.0};
};

StateSpaceModel lss_model(double fs, const FilterTuning& tuning = {});
StateSpaceModel wlss_model(double fs, const FilterTuning& tuning = {});
StateSpaceModel nss_model(double fs, const FilterTuning& tuning = {});
StateSpaceModel shared_increment_model(double fs, const FilterTuning& tuning = {});
StateSpaceModel make_model(ModelKind kind, double fs, const FilterTuning& tuning = {});

/// f = Im(ln x) / (2 pi dT) on the principal branch.
FreqEstimate frequency_from_increment(cd x, double fs);
/// f = arcsin(Im(h + a)) / (2 pi dT), a = -j Im(h) + j sqrt(Im(h)^2 - |g|^2).
FreqEstimate frequency_from_wl_weights(cd h, cd g, double fs);

/// Prior state: nominal phase increment, voltages from the first
/// observation, g and v- at zero, M = m0 I.
FilterState initial_state(const StateSpaceModel& model, cd first_observation,
                          const FilterTuning& tuning = {});

/// One ACEKF recursion. Throws FilterDegenerateError when the innovation
/// covariance is singular (condition number above 1e12).
FilterState acekf_step(const StateSpaceModel& model, const FilterState& st,
                       const AugmentedVector& y, StepRecord* record = nullptr);
/// Same, with the observation matrix supplied by the caller.
FilterState acekf_step(const StateSpaceModel& model, const FilterState& st,
                       const AugmentedVector& y, const AugmentedMatrix& H,
                       StepRecord* record = nullptr);

struct TraceRecord {
  long k = 0;
  double t_s = 0.0;
  double f_hat_hz = 0.0;
  double innovation_power = 0.0;
  std::uint32_t flags = 0;
  CVec state;
};

struct FreqTrace {
  double sample_rate_hz = 1000.0;
  std::vector<TraceRecord> records;

  std::size_t size() const { return records.size(); }
  std::vector<double> f_hat() const;
};

/// Drives acekf_step over a sample stream. Tick 0 records `init` and each
/// later tick k consumes augment([v_k]).
FreqTrace run_filter(const StateSpaceModel& model, std::span<const ClarkeSample> samples,
                     const FilterState& init, std::vector<StepRecord>* records = nullptr);

/// Builds the model, initializes it from samples[0] and runs it.
FreqTrace run_estimator(ModelKind kind, std::span<const ClarkeSample> samples, double fs,
                        const FilterTuning& tuning = {});

/// CSV `k,t_s,f_hat_hz,f_true_hz,err_hz,innov_power,flags`. f_true may be
/// empty, in which case the truth columns are `nan`.
void write_trace_csv(std::ostream& os, const FreqTrace& trace, std::span<const double> f_true);

}  // namespace wlfreq
