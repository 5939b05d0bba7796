// SPDX-License-Identifier: Apache-2.0
//
// Error metrics for recorded runs: empirical frequency MSE, the mean-error and
// error-covariance recursions driven by recorded filter matrices, and the
// spectrum of a frequency-error series.

#pragma once

#include <cstddef>
#include <iosfwd>
#include <limits>
#include <map>
#include <span>
#include <vector>

#include "wlfreq/augmented.hpp"
#include "wlfreq/estimators.hpp"
#include "wlfreq/network.hpp"

namespace wlfreq {

/// Half-open tick range [begin, end).
struct Window {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end > begin ? end - begin : 0; }
  /// Ticks covering [t0, t1) seconds at sample rate fs.
  static Window seconds(double t0, double t1, double fs);
};

/// Mean of (f_hat - f_true)^2 over the window. Throws std::invalid_argument on
/// an empty window or one that runs past either series.
double trace_mse(const FreqTrace& trace, std::span<const double> f_true, Window w);
/// Mean of f_hat - f_true over the window.
double trace_mean_error(const FreqTrace& trace, std::span<const double> f_true, Window w);

struct NodeMse {
  NodeId node = 0;
  double empirical_mse_hz2 = 0.0;
  double standard_error = 0.0;   // across runs; 0 for a single run
  std::size_t runs = 1;
  double theoretical_trace = std::numeric_limits<double>::quiet_NaN();
  bool bound_ok = true;
};

struct MseReport {
  std::vector<NodeMse> nodes;

  const NodeMse& at(NodeId id) const;
  NodeMse& at(NodeId id);
};

MseReport empirical_mse(const std::map<NodeId, FreqTrace>& traces, std::span<const double> f_true,
                        Window w);
MseReport empirical_mse(const std::map<NodeId, FreqTrace>& traces,
                        const std::map<NodeId, std::vector<double>>& f_true, Window w);
/// Per-node average over independent runs, with the standard error of the mean.
MseReport monte_carlo_mse(std::span<const MseReport> runs);

/// CSV `node,empirical_mse_hz2,theoretical_trace,bound_ok`.
void write_mse_csv(std::ostream& os, const MseReport& report);

/// Stacked per-node error statistics over `order`. Every block is 2n x 2n with
/// n the top-half state dimension.
struct NetworkErrorState {
  std::vector<NodeId> order;
  Eigen::Index block = 0;   // 2n
  CMat E;                   // error cross-covariance
  CMat U;                   // state-noise cross-covariance
  CMat G;                   // observation-noise cross-covariance, 2p blocks

  /// Block-diagonal U and G from per-node noise covariances and E from the
  /// initial error covariances.
  static NetworkErrorState block_diagonal(const std::vector<NodeId>& order,
                                          const std::map<NodeId, AugmentedMatrix>& initial,
                                          const AugmentedMatrix& cu, const AugmentedMatrix& cn);

  CMat block_of(const CMat& m, std::size_t i, std::size_t j) const;
};

/// One propagation of the mean errors: e_i <- sum of combination weights times
/// M_post M_prior^-1 A e. Throws Error when a recorded M_prior is singular.
std::map<NodeId, AugmentedVector> mean_error_step(
    const std::map<NodeId, AugmentedVector>& prev, const CombinationOperator& op,
    const std::map<NodeId, StepRecord>& records);

struct MseStep {
  CMat V;                                     // after the first combination stage
  CMat Sigma;                                 // after both stages; next E
  std::map<NodeId, double> sigma_trace;       // tr Sigma_ii
  std::map<NodeId, double> conventional_trace;// tr V_ii
  std::map<NodeId, bool> bound_ok;            // non-bridge bound; true at bridges
};

/// V = F P F^H and Sigma = S V S^H with
///   P = D_A E D_A^H + D_R U D_R^H + D_Q G D_Q^H,
///   D_A = diag(M_post M_prior^-1 A), D_R = diag(M_post M_prior^-1), D_Q = diag(K),
/// and F, S the first and second combination stages lifted to blocks. Updates
/// state.E to Sigma. For a non-bridge node m the bound tr Sigma_mm <= max over
/// its bridges b of tr V_bb is checked with a relative tolerance of 1e-12.
MseStep mse_step(NetworkErrorState& state, const CombinationOperator& op,
                 const std::map<NodeId, StepRecord>& records, const BridgeAssignment& bridges,
                 const Topology& topology);

struct Spectrum {
  std::vector<double> freq_hz;
  std::vector<double> magnitude;   // |DFT|
  double peak_freq_hz = 0.0;
  double peak_power = 0.0;         // |DFT|^2 at the peak
};

/// DFT magnitude of the linearly detrended series over the window, bins 0 to
/// N/2. The peak is the largest bin above DC. Throws std::invalid_argument when
/// the window is shorter than 512 samples or exceeds the series.
Spectrum error_spectrum(std::span<const double> error, double fs, Window w);
Spectrum error_spectrum(const FreqTrace& trace, std::span<const double> f_true, Window w);

/// CSV `freq_hz,power` with power = |DFT|^2.
void write_spectrum_csv(std::ostream& os, const Spectrum& s);

}  // namespace wlfreq
