// SPDX-License-Identifier: Apache-2.0
#include "wlfreq/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include <unsupported/Eigen/FFT>

#include "wlfreq/csv.hpp"
#include "wlfreq/error.hpp"

namespace wlfreq {

namespace {

constexpr double kMaxPriorCondition = 1e12;

void check_window(Window w, std::size_t n, const char* what)
{
  if (w.size() == 0)
    throw std::invalid_argument(std::string(what) + ": empty window");
  if (w.end > n)
    throw std::invalid_argument(std::string(what) + ": window [" + std::to_string(w.begin) +
                                ", " + std::to_string(w.end) + ") exceeds series of length " +
                                std::to_string(n));
}

CMat prior_inverse(const StepRecord& r, NodeId id)
{
  const CMat Mp = r.M_prior.materialize();
  const Eigen::JacobiSVD<CMat> svd(Mp);
  const auto& sv = svd.singularValues();
  const double smin = sv(sv.size() - 1);
  if (!(smin > 0.0) || sv(0) / smin > kMaxPriorCondition)
    throw Error("node " + std::to_string(id) + ": singular prior covariance");
  return Mp.partialPivLu().inverse();
}

const StepRecord& record_for(const std::map<NodeId, StepRecord>& records, NodeId id)
{
  auto it = records.find(id);
  if (it == records.end())
    throw Error("no recorded filter matrices for node " + std::to_string(id));
  return it->second;
}

// Lifts an N x N weight matrix to N*b x N*b blocks.
CMat lift(const Eigen::MatrixXd& w, Eigen::Index b)
{
  CMat out = CMat::Zero(w.rows() * b, w.cols() * b);
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      if (w(i, j) != 0.0)
        out.block(i * b, j * b, b, b) = w(i, j) * CMat::Identity(b, b);
  return out;
}

CMat hermitian(const CMat& m)
{
  return (m + m.adjoint()) / 2.0;
}

double block_trace(const CMat& m, Eigen::Index i, Eigen::Index b)
{
  return m.block(i * b, i * b, b, b).trace().real();
}

}  // namespace

Window Window::seconds(double t0, double t1, double fs)
{
  return {static_cast<std::size_t>(std::llround(t0 * fs)),
          static_cast<std::size_t>(std::llround(t1 * fs))};
}

double trace_mse(const FreqTrace& trace, std::span<const double> f_true, Window w)
{
  check_window(w, std::min(trace.size(), f_true.size()), "trace_mse");
  double acc = 0.0;
  for (std::size_t k = w.begin; k < w.end; ++k) {
    const double e = trace.records[k].f_hat_hz - f_true[k];
    acc += e * e;
  }
  return acc / static_cast<double>(w.size());
}

double trace_mean_error(const FreqTrace& trace, std::span<const double> f_true, Window w)
{
  check_window(w, std::min(trace.size(), f_true.size()), "trace_mean_error");
  double acc = 0.0;
  for (std::size_t k = w.begin; k < w.end; ++k)
    acc += trace.records[k].f_hat_hz - f_true[k];
  return acc / static_cast<double>(w.size());
}

const NodeMse& MseReport::at(NodeId id) const
{
  for (const auto& n : nodes)
    if (n.node == id)
      return n;
  throw std::out_of_range("MseReport: no node " + std::to_string(id));
}

NodeMse& MseReport::at(NodeId id)
{
  return const_cast<NodeMse&>(static_cast<const MseReport&>(*this).at(id));
}

MseReport empirical_mse(const std::map<NodeId, FreqTrace>& traces, std::span<const double> f_true,
                        Window w)
{
  MseReport r;
  for (const auto& [id, tr] : traces) {
    NodeMse n;
    n.node = id;
    n.empirical_mse_hz2 = trace_mse(tr, f_true, w);
    r.nodes.push_back(n);
  }
  return r;
}

MseReport empirical_mse(const std::map<NodeId, FreqTrace>& traces,
                        const std::map<NodeId, std::vector<double>>& f_true, Window w)
{
  MseReport r;
  for (const auto& [id, tr] : traces) {
    auto it = f_true.find(id);
    if (it == f_true.end())
      throw std::invalid_argument("empirical_mse: no truth series for node " + std::to_string(id));
    NodeMse n;
    n.node = id;
    n.empirical_mse_hz2 = trace_mse(tr, it->second, w);
    r.nodes.push_back(n);
  }
  return r;
}

MseReport monte_carlo_mse(std::span<const MseReport> runs)
{
  if (runs.empty())
    throw std::invalid_argument("monte_carlo_mse: no runs");
  MseReport out;
  const double n = static_cast<double>(runs.size());
  for (const auto& first : runs.front().nodes) {
    double sum = 0.0, sq = 0.0;
    for (const auto& run : runs) {
      const double v = run.at(first.node).empirical_mse_hz2;
      sum += v;
      sq += v * v;
    }
    NodeMse m = first;
    m.runs = runs.size();
    m.empirical_mse_hz2 = sum / n;
    const double var = runs.size() > 1 ? std::max(0.0, (sq - sum * sum / n) / (n - 1.0)) : 0.0;
    m.standard_error = std::sqrt(var / n);
    out.nodes.push_back(m);
  }
  return out;
}

void write_mse_csv(std::ostream& os, const MseReport& report)
{
  os << "node,empirical_mse_hz2,theoretical_trace,bound_ok\n";
  for (const auto& n : report.nodes)
    os << n.node << ',' << format_double(n.empirical_mse_hz2) << ','
       << format_double(n.theoretical_trace) << ',' << (n.bound_ok ? "true" : "false") << '\n';
}

NetworkErrorState NetworkErrorState::block_diagonal(
    const std::vector<NodeId>& order, const std::map<NodeId, AugmentedMatrix>& initial,
    const AugmentedMatrix& cu, const AugmentedMatrix& cn)
{
  NetworkErrorState s;
  s.order = order;
  s.block = 2 * cu.rows();
  const Eigen::Index b = s.block;
  const Eigen::Index p = 2 * cn.rows();
  const auto n = static_cast<Eigen::Index>(order.size());
  s.E = CMat::Zero(n * b, n * b);
  s.U = CMat::Zero(n * b, n * b);
  s.G = CMat::Zero(n * p, n * p);
  const CMat cu2 = cu.materialize();
  const CMat cn2 = cn.materialize();
  for (Eigen::Index i = 0; i < n; ++i) {
    auto it = initial.find(order[static_cast<std::size_t>(i)]);
    if (it == initial.end())
      throw std::invalid_argument("NetworkErrorState: no initial covariance for node " +
                                  std::to_string(order[static_cast<std::size_t>(i)]));
    if (2 * it->second.rows() != b)
      throw std::invalid_argument("NetworkErrorState: initial covariance dimension mismatch");
    s.E.block(i * b, i * b, b, b) = it->second.materialize();
    s.U.block(i * b, i * b, b, b) = cu2;
    s.G.block(i * p, i * p, p, p) = cn2;
  }
  return s;
}

CMat NetworkErrorState::block_of(const CMat& m, std::size_t i, std::size_t j) const
{
  return m.block(static_cast<Eigen::Index>(i) * block, static_cast<Eigen::Index>(j) * block,
                 block, block);
}

std::map<NodeId, AugmentedVector> mean_error_step(
    const std::map<NodeId, AugmentedVector>& prev, const CombinationOperator& op,
    const std::map<NodeId, StepRecord>& records)
{
  const std::size_t n = op.order.size();
  std::vector<CVec> p(n), q(n);
  for (std::size_t i = 0; i < n; ++i) {
    const NodeId id = op.order[i];
    auto e = prev.find(id);
    if (e == prev.end())
      throw std::invalid_argument("mean_error_step: no mean error for node " + std::to_string(id));
    const StepRecord& r = record_for(records, id);
    if (r.A.rows() != e->second.size())
      throw std::invalid_argument("mean_error_step: dimension mismatch at node " +
                                  std::to_string(id));
    p[i] = r.M_post.materialize() * prior_inverse(r, id) * r.A.materialize() *
           e->second.materialize();
  }
  auto mix = [&](const Eigen::MatrixXd& w, const std::vector<CVec>& in, std::vector<CVec>& out) {
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = CVec::Zero(in[i].size());
      for (std::size_t j = 0; j < n; ++j)
        if (const double c = w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)); c != 0.0)
          out[i] += c * in[j];
    }
  };
  mix(op.first, p, q);
  mix(op.second, q, p);
  std::map<NodeId, AugmentedVector> out;
  for (std::size_t i = 0; i < n; ++i)
    out[op.order[i]] = AugmentedVector::from_materialized(p[i], 1e-6);
  return out;
}

MseStep mse_step(NetworkErrorState& state, const CombinationOperator& op,
                 const std::map<NodeId, StepRecord>& records, const BridgeAssignment& bridges,
                 const Topology& topology)
{
  const Eigen::Index b = state.block;
  const auto n = static_cast<Eigen::Index>(state.order.size());
  if (op.order != state.order)
    throw std::invalid_argument("mse_step: node order differs from the combination operator");
  if (state.E.rows() != n * b || state.E.cols() != n * b || state.U.rows() != n * b ||
      state.U.cols() != n * b || b == 0)
    throw std::invalid_argument("mse_step: error state dimension mismatch");
  if (state.G.rows() % std::max<Eigen::Index>(n, 1) != 0 || state.G.rows() != state.G.cols())
    throw std::invalid_argument("mse_step: observation-noise dimension mismatch");
  const Eigen::Index p = state.G.rows() / n;

  CMat DA = CMat::Zero(n * b, n * b);
  CMat DR = CMat::Zero(n * b, n * b);
  CMat DQ = CMat::Zero(n * b, n * p);
  for (Eigen::Index i = 0; i < n; ++i) {
    const NodeId id = state.order[static_cast<std::size_t>(i)];
    const StepRecord& r = record_for(records, id);
    if (2 * r.A.rows() != b || 2 * r.G.cols() != p)
      throw std::invalid_argument("mse_step: recorded matrices do not match block size at node " +
                                  std::to_string(id));
    const CMat R = r.M_post.materialize() * prior_inverse(r, id);
    DR.block(i * b, i * b, b, b) = R;
    DA.block(i * b, i * b, b, b) = R * r.A.materialize();
    DQ.block(i * b, i * p, b, p) = r.G.materialize();
  }

  const CMat P = hermitian(DA * state.E * DA.adjoint() + DR * state.U * DR.adjoint() +
                           DQ * state.G * DQ.adjoint());
  const CMat F = lift(op.first, b);
  const CMat S = lift(op.second, b);

  MseStep out;
  out.V = hermitian(F * P * F.adjoint());
  out.Sigma = hermitian(S * out.V * S.adjoint());
  for (Eigen::Index i = 0; i < n; ++i) {
    const NodeId id = state.order[static_cast<std::size_t>(i)];
    out.sigma_trace[id] = block_trace(out.Sigma, i, b);
    out.conventional_trace[id] = block_trace(out.V, i, b);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const NodeId id = state.order[static_cast<std::size_t>(i)];
    bool ok = true;
    if (!bridges.is_bridge(id) && op.second(i, i) != 1.0) {
      double bound = 0.0;
      for (NodeId bn : bridge_neighbors(topology, bridges, id))
        bound = std::max(bound, out.conventional_trace.at(bn));
      ok = out.sigma_trace.at(id) <= bound * (1.0 + 1e-12) + 1e-300;
    }
    out.bound_ok[id] = ok;
  }
  state.E = out.Sigma;
  return out;
}

Spectrum error_spectrum(std::span<const double> error, double fs, Window w)
{
  if (w.end > error.size())
    throw std::invalid_argument("error_spectrum: window [" + std::to_string(w.begin) + ", " +
                                std::to_string(w.end) + ") exceeds trace of length " +
                                std::to_string(error.size()));
  if (w.size() < 512)
    throw std::invalid_argument("error_spectrum: window must cover at least 512 samples");

  const std::size_t n = w.size();
  // Least-squares line through the window.
  const double tm = (static_cast<double>(n) - 1.0) / 2.0;
  double ym = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    ym += error[w.begin + i];
  ym /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dt = static_cast<double>(i) - tm;
    sxy += dt * (error[w.begin + i] - ym);
    sxx += dt * dt;
  }
  const double slope = sxy / sxx;
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i)
    x[i] = error[w.begin + i] - ym - slope * (static_cast<double>(i) - tm);

  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> X;
  fft.fwd(X, x);

  Spectrum s;
  const std::size_t bins = n / 2 + 1;
  s.freq_hz.resize(bins);
  s.magnitude.resize(bins);
  std::size_t peak = 1;
  for (std::size_t i = 0; i < bins; ++i) {
    s.freq_hz[i] = static_cast<double>(i) * fs / static_cast<double>(n);
    s.magnitude[i] = std::abs(X[i]);
    if (i > 0 && s.magnitude[i] > s.magnitude[peak])
      peak = i;
  }
  s.peak_freq_hz = s.freq_hz[peak];
  s.peak_power = s.magnitude[peak] * s.magnitude[peak];
  return s;
}

Spectrum error_spectrum(const FreqTrace& trace, std::span<const double> f_true, Window w)
{
  const std::size_t n = std::min(trace.size(), f_true.size());
  std::vector<double> e(n);
  for (std::size_t k = 0; k < n; ++k)
    e[k] = trace.records[k].f_hat_hz - f_true[k];
  return error_spectrum(e, trace.sample_rate_hz, w);
}

void write_spectrum_csv(std::ostream& os, const Spectrum& s)
{
  os << "freq_hz,power\n";
  for (std::size_t i = 0; i < s.freq_hz.size(); ++i)
    os << format_double(s.freq_hz[i]) << ',' << format_double(s.magnitude[i] * s.magnitude[i])
       << '\n';
}

}  // namespace wlfreq
