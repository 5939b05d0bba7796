// SPDX-License-Identifier: Apache-2.0
//
// Three-phase voltage scenarios, the Clarke transform and the positive /
// negative sequence decompositions used as test oracles.
//
// Phase convention: phase b lags a by 2pi/3 and phase c lags by 4pi/3, so a
// balanced system maps to v_k = sqrt(3/2) V exp(+j theta_k).

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wlfreq/augmented.hpp"

namespace wlfreq {

struct PhaseTriple {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
};

struct FreqProfile {
  enum class Kind { constant, step, ramp };

  Kind kind = Kind::constant;
  double f_hz = 50.0;           // constant and step
  double f0_hz = 50.0;          // ramp start
  double rate_hz_per_s = 0.0;   // ramp slope

  static FreqProfile constant(double f) { return {Kind::constant, f, f, 0.0}; }
  static FreqProfile step(double f) { return {Kind::step, f, f, 0.0}; }
  static FreqProfile ramp(double f0, double rate) { return {Kind::ramp, f0, f0, rate}; }

  /// Frequency at time t for a segment starting at segment_start.
  double at(double t, double segment_start) const;
};

struct ScenarioSegment {
  double start_s = 0.0;
  double end_s = 0.0;
  FreqProfile freq;
  PhaseTriple amplitudes{1.0, 1.0, 1.0};   // per-unit
  PhaseTriple phase_offsets_rad{};
};

struct Scenario {
  std::vector<ScenarioSegment> segments;
  double sample_rate_hz = 1000.0;
  double duration_s = 0.0;

  double dt() const { return 1.0 / sample_rate_hz; }
  std::size_t sample_count() const;
  /// Segment active at time t. Times past the end map to the last segment.
  const ScenarioSegment& segment_at(double t) const;
  /// Human-readable problems, each prefixed with a field path. Empty iff valid.
  std::vector<std::string> validate(const std::string& path = "scenario") const;

  /// A single constant-frequency segment covering the whole duration.
  static Scenario steady(double f_hz, PhaseTriple amplitudes, PhaseTriple phases_rad,
                         double duration_s, double sample_rate_hz = 1000.0);
};

struct ThreePhaseSample {
  long k = 0;
  double va = 0.0;
  double vb = 0.0;
  double vc = 0.0;
};

struct ClarkeSample {
  double v0 = 0.0;
  cd v{0.0, 0.0};   // v_alpha + j v_beta
};

/// Accumulated phase theta_k for every tick. theta_0 = 0 and
/// theta_{k+1} = theta_k + 2 pi f(t_k) dt; segment boundaries and frequency
/// steps never reset it.
std::vector<double> accumulated_phase(const Scenario& s);

/// Frequency of the phase increment that ends at tick k, i.e. f(t_{k-1}),
/// with f(t_0) for k = 0. This is the quantity a phase-increment estimator
/// sees at tick k.
std::vector<double> increment_frequency(const Scenario& s);

/// Per-phase Gaussian noise variance for a given SNR with V_nom = 1 pu.
double phase_noise_variance(double snr_db);

/// Throws ConfigError if the scenario is invalid. Noise, when requested, is
/// drawn from a 64-bit Mersenne twister seeded with `seed`.
std::vector<ThreePhaseSample> generate(const Scenario& s, std::uint64_t seed,
                                       std::optional<double> snr_db = std::nullopt);

ClarkeSample clarke(const ThreePhaseSample& s);
ThreePhaseSample inverse_clarke(const ClarkeSample& c, long k = 0);
std::vector<ClarkeSample> clarke(std::span<const ThreePhaseSample> samples);

/// Positive (A) and negative (B) sequence amplitudes for equal phase offsets:
/// v_k = A exp(j(theta_k + phi)) + B exp(-j(theta_k + phi)).
struct SequenceComponents {
  cd positive;          // A
  cd negative;          // B
  cd positive_phasor;   // A exp(+j phi)
  cd negative_phasor;   // B exp(-j phi)
};
SequenceComponents sequence_components(double va, double vb, double vc, double phi);

/// In-phase and quadrature phasors with v_k = L_I cos(theta_k) - L_Q sin(theta_k),
/// valid for arbitrary per-phase amplitudes and offsets.
struct LambdaComponents {
  cd in_phase;     // Lambda_I
  cd quadrature;   // Lambda_Q
};
LambdaComponents lambda_components(PhaseTriple amplitudes, PhaseTriple phases_rad);

struct PosNeg {
  cd v_plus;
  cd v_minus;
};

/// Least-squares split of v_k into c+ exp(j theta_k) + c- exp(-j theta_k)
/// with theta_k = 2 pi f k / fs, fitted on a centred window (one period of
/// f when window == 0). The fit residual is shared equally between the two
/// outputs so that v_plus + v_minus reproduces v_k.
std::vector<PosNeg> pos_neg_decompose(std::span<const ClarkeSample> samples, double f_hz,
                                      double fs_hz, std::size_t window = 0);

/// Analytic split from the scenario parameters (noiseless ground truth).
std::vector<PosNeg> pos_neg_decompose(const Scenario& s);

/// CSV `k,t_s,va,vb,vc,v0,valpha,vbeta`.
void write_samples_csv(std::ostream& os, std::span<const ThreePhaseSample> samples,
                       double sample_rate_hz);

}  // namespace wlfreq
