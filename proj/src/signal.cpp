// SPDX-License-Identifier: Apache-2.0
#include "wlfreq/signal.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

#include "wlfreq/csv.hpp"
#include "wlfreq/error.hpp"

namespace wlfreq {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoThirdsPi = 2.0 * kPi / 3.0;
constexpr double kFourThirdsPi = 4.0 * kPi / 3.0;
constexpr double kTimeEps = 1e-9;

const double kSqrt23 = std::sqrt(2.0 / 3.0);
const double kSqrt2 = std::numbers::sqrt2;
const double kSqrt3 = std::numbers::sqrt3;
const double kSqrt6 = std::sqrt(6.0);

std::string fmt_time(double t)
{
  std::ostringstream os;
  os << t;
  return os.str();
}

}  // namespace

double FreqProfile::at(double t, double segment_start) const
{
  switch (kind) {
  case Kind::constant:
  case Kind::step:
    return f_hz;
  case Kind::ramp:
    return f0_hz + rate_hz_per_s * (t - segment_start);
  }
  return f_hz;
}

std::size_t Scenario::sample_count() const
{
  return static_cast<std::size_t>(std::llround(duration_s * sample_rate_hz));
}

const ScenarioSegment& Scenario::segment_at(double t) const
{
  for (const auto& seg : segments)
    if (t < seg.end_s - kTimeEps)
      return seg;
  return segments.back();
}

std::vector<std::string> Scenario::validate(const std::string& path) const
{
  std::vector<std::string> out;
  if (!(sample_rate_hz > 0.0))
    out.push_back(path + ".sample_rate_hz: must be positive");
  if (!(duration_s > 0.0))
    out.push_back(path + ".duration_s: must be positive");
  if (segments.empty()) {
    out.push_back(path + ".segments: at least one segment is required");
    return out;
  }
  const double nyquist = sample_rate_hz / 2.0;
  double cursor = 0.0;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& seg = segments[i];
    const std::string p = path + ".segments[" + std::to_string(i) + "]";
    if (!(seg.end_s > seg.start_s))
      out.push_back(p + ": end_s must exceed start_s");
    if (seg.start_s > cursor + kTimeEps)
      out.push_back(p + ": gap in coverage from " + fmt_time(cursor) + " s to " +
                    fmt_time(seg.start_s) + " s");
    else if (seg.start_s < cursor - kTimeEps)
      out.push_back(p + ": overlaps previous segment from " + fmt_time(seg.start_s) +
                    " s to " + fmt_time(cursor) + " s");
    if (seg.amplitudes.a < 0 || seg.amplitudes.b < 0 || seg.amplitudes.c < 0)
      out.push_back(p + ".amplitudes: must be non-negative");
    const double f_begin = seg.freq.at(seg.start_s, seg.start_s);
    const double f_end = seg.freq.at(seg.end_s, seg.start_s);
    if (!(std::abs(f_begin) < nyquist) || !(std::abs(f_end) < nyquist))
      out.push_back(p + ".freq: |f| must stay below fs/2 = " + fmt_time(nyquist) + " Hz");
    cursor = std::max(cursor, seg.end_s);
  }
  if (duration_s > 0.0 && cursor < duration_s - kTimeEps)
    out.push_back(path + ".segments: gap in coverage from " + fmt_time(cursor) + " s to " +
                  fmt_time(duration_s) + " s");
  if (duration_s > 0.0 && cursor > duration_s + kTimeEps)
    out.push_back(path + ".segments: coverage extends past duration_s (" + fmt_time(cursor) +
                  " s > " + fmt_time(duration_s) + " s)");
  return out;
}

Scenario Scenario::steady(double f_hz, PhaseTriple amplitudes, PhaseTriple phases_rad,
                          double duration_s, double sample_rate_hz)
{
  Scenario s;
  s.sample_rate_hz = sample_rate_hz;
  s.duration_s = duration_s;
  s.segments.push_back({0.0, duration_s, FreqProfile::constant(f_hz), amplitudes, phases_rad});
  return s;
}

std::vector<double> accumulated_phase(const Scenario& s)
{
  const std::size_t n = s.sample_count();
  const double dt = s.dt();
  std::vector<double> theta(n);
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    theta[k] = acc;
    const double t = static_cast<double>(k) * dt;
    const auto& seg = s.segment_at(t);
    acc += 2.0 * kPi * seg.freq.at(t, seg.start_s) * dt;
  }
  return theta;
}

std::vector<double> increment_frequency(const Scenario& s)
{
  const std::size_t n = s.sample_count();
  const double dt = s.dt();
  std::vector<double> f(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k == 0 ? 0 : k - 1) * dt;
    const auto& seg = s.segment_at(t);
    f[k] = seg.freq.at(t, seg.start_s);
  }
  return f;
}

double phase_noise_variance(double snr_db)
{
  return 0.5 * std::pow(10.0, -snr_db / 10.0);
}

std::vector<ThreePhaseSample> generate(const Scenario& s, std::uint64_t seed,
                                       std::optional<double> snr_db)
{
  if (auto problems = s.validate(); !problems.empty())
    throw ConfigError(problems.front());

  const std::vector<double> theta = accumulated_phase(s);
  const double dt = s.dt();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(
      0.0, snr_db ? std::sqrt(phase_noise_variance(*snr_db)) : 0.0);

  std::vector<ThreePhaseSample> out(theta.size());
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const auto& seg = s.segment_at(static_cast<double>(k) * dt);
    const auto& amp = seg.amplitudes;
    const auto& ph = seg.phase_offsets_rad;
    ThreePhaseSample& o = out[k];
    o.k = static_cast<long>(k);
    o.va = amp.a * std::cos(theta[k] + ph.a);
    o.vb = amp.b * std::cos(theta[k] + ph.b - kTwoThirdsPi);
    o.vc = amp.c * std::cos(theta[k] + ph.c - kFourThirdsPi);
    if (snr_db) {
      o.va += normal(rng);
      o.vb += normal(rng);
      o.vc += normal(rng);
    }
  }
  return out;
}

ClarkeSample clarke(const ThreePhaseSample& s)
{
  ClarkeSample c;
  c.v0 = kSqrt23 * (kSqrt2 / 2.0) * (s.va + s.vb + s.vc);
  const double alpha = kSqrt23 * (s.va - 0.5 * s.vb - 0.5 * s.vc);
  const double beta = kSqrt23 * (kSqrt3 / 2.0) * (s.vb - s.vc);
  c.v = {alpha, beta};
  return c;
}

std::vector<ClarkeSample> clarke(std::span<const ThreePhaseSample> samples)
{
  std::vector<ClarkeSample> out;
  out.reserve(samples.size());
  for (const auto& s : samples)
    out.push_back(clarke(s));
  return out;
}

ThreePhaseSample inverse_clarke(const ClarkeSample& c, long k)
{
  // The Clarke matrix is orthogonal, so its inverse is its transpose.
  const double alpha = c.v.real();
  const double beta = c.v.imag();
  const double z = kSqrt23 * (kSqrt2 / 2.0) * c.v0;
  ThreePhaseSample s;
  s.k = k;
  s.va = z + kSqrt23 * alpha;
  s.vb = z - kSqrt23 * 0.5 * alpha + kSqrt23 * (kSqrt3 / 2.0) * beta;
  s.vc = z - kSqrt23 * 0.5 * alpha - kSqrt23 * (kSqrt3 / 2.0) * beta;
  return s;
}

SequenceComponents sequence_components(double va, double vb, double vc, double phi)
{
  SequenceComponents sc;
  sc.positive = kSqrt6 * (va + vb + vc) / 6.0;
  sc.negative = cd(kSqrt6 * (2.0 * va - vb - vc) / 12.0, -kSqrt2 * (vb - vc) / 4.0);
  sc.positive_phasor = sc.positive * std::polar(1.0, phi);
  sc.negative_phasor = sc.negative * std::polar(1.0, -phi);
  return sc;
}

LambdaComponents lambda_components(PhaseTriple amp, PhaseTriple ph)
{
  // Clarke output is sqrt(2/3) (v_a + a v_b + a^2 v_c) with a = exp(j 2pi/3).
  const cd coef_b = cd(-1.0, kSqrt3) / kSqrt6;    // sqrt(2/3) a
  const cd coef_c = -cd(1.0, kSqrt3) / kSqrt6;    // sqrt(2/3) a^2
  const double ang_a = ph.a;
  const double ang_b = ph.b - kTwoThirdsPi;
  const double ang_c = ph.c - kFourThirdsPi;
  LambdaComponents l;
  l.in_phase = kSqrt23 * amp.a * std::cos(ang_a) + coef_b * (amp.b * std::cos(ang_b)) +
               coef_c * (amp.c * std::cos(ang_c));
  l.quadrature = kSqrt23 * amp.a * std::sin(ang_a) + coef_b * (amp.b * std::sin(ang_b)) +
                 coef_c * (amp.c * std::sin(ang_c));
  return l;
}

std::vector<PosNeg> pos_neg_decompose(std::span<const ClarkeSample> samples, double f_hz,
                                      double fs_hz, std::size_t window)
{
  const std::size_t n = samples.size();
  if (window == 0)
    window = static_cast<std::size_t>(std::llround(fs_hz / std::abs(f_hz)));
  window = std::clamp<std::size_t>(window, 2, std::max<std::size_t>(n, 2));
  const double w = 2.0 * kPi * f_hz / fs_hz;

  std::vector<PosNeg> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t lo = k >= window / 2 ? k - window / 2 : 0;
    if (lo + window > n)
      lo = n >= window ? n - window : 0;
    const std::size_t hi = std::min(n, lo + window);

    // Normal equations for [c+, c-] with basis e_i = exp(j w i), conj(e_i).
    cd g11 = 0, g12 = 0, r1 = 0, r2 = 0;
    for (std::size_t i = lo; i < hi; ++i) {
      const cd e = std::polar(1.0, w * static_cast<double>(i));
      g11 += 1.0;
      g12 += std::conj(e) * std::conj(e);   // <e, conj(e)> = sum conj(e)^2
      r1 += std::conj(e) * samples[i].v;
      r2 += e * samples[i].v;
    }
    const cd g21 = std::conj(g12);
    const cd det = g11 * g11 - g12 * g21;
    const cd c_plus = (g11 * r1 - g12 * r2) / det;
    const cd c_minus = (g11 * r2 - g21 * r1) / det;

    const cd e = std::polar(1.0, w * static_cast<double>(k));
    cd vp = c_plus * e;
    cd vm = c_minus * std::conj(e);
    const cd residual = samples[k].v - vp - vm;
    out[k] = {vp + residual / 2.0, vm + residual / 2.0};
  }
  return out;
}

std::vector<PosNeg> pos_neg_decompose(const Scenario& s)
{
  const std::vector<double> theta = accumulated_phase(s);
  const double dt = s.dt();
  std::vector<PosNeg> out(theta.size());
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const auto& seg = s.segment_at(static_cast<double>(k) * dt);
    const auto lam = lambda_components(seg.amplitudes, seg.phase_offsets_rad);
    const cd j(0.0, 1.0);
    out[k].v_plus = (lam.in_phase + j * lam.quadrature) / 2.0 * std::polar(1.0, theta[k]);
    out[k].v_minus = (lam.in_phase - j * lam.quadrature) / 2.0 * std::polar(1.0, -theta[k]);
  }
  return out;
}

void write_samples_csv(std::ostream& os, std::span<const ThreePhaseSample> samples,
                       double sample_rate_hz)
{
  os << "k,t_s,va,vb,vc,v0,valpha,vbeta\n";
  for (const auto& s : samples) {
    const auto c = clarke(s);
    os << s.k << ',' << format_double(static_cast<double>(s.k) / sample_rate_hz) << ','
       << format_double(s.va) << ',' << format_double(s.vb) << ',' << format_double(s.vc)
       << ',' << format_double(c.v0) << ',' << format_double(c.v.real()) << ','
       << format_double(c.v.imag()) << '\n';
  }
}

}  // namespace wlfreq
