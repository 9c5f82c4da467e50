#pragma once

// Entropies, tripartite mutual information, thermalization diagnostics and
// cusp detection on recorded time series.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tmi/density.hpp"
#include "tmi/evolve.hpp"
#include "tmi/hilbert.hpp"

namespace tmi {

enum class LogBase { bits, nats };

inline double log_in(LogBase base, double x) { return base == LogBase::bits ? std::log2(x) : std::log(x); }

/// -sum p log p over the eigenvalues of rho; eigenvalues below 1e-12 are dropped.
inline double von_neumann_entropy(const DensityMatrix& rho, LogBase base = LogBase::bits) {
  if (std::abs(rho.trace() - 1.0) > 1e-6)
    throw InvalidArgument("von_neumann_entropy: trace " + std::to_string(rho.trace()) + " is not 1");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(rho.matrix, Eigen::EigenvaluesOnly);
  double s = 0.0;
  for (double p : es.eigenvalues())
    if (p > 1e-12) s -= p * log_in(base, p);
  return s;
}

/// Four disjoint blocks covering a register.
struct SubsystemPartition {
  std::vector<Qubit> a, b, c, d;

  /// A = Q_A, B = Q_1, C = Q_2..Q_{N/2}, D = Q_{N/2+1}..Q_N.
  static SubsystemPartition protocol(int n_system) {
    if (n_system < 4 || n_system % 2 != 0)
      throw InvalidArgument("protocol partition needs an even chain with N >= 4, got " + std::to_string(n_system));
    SubsystemPartition p;
    p.a = {Qubit::ancilla()};
    p.b = {Qubit::system(1)};
    for (int i = 2; i <= n_system / 2; ++i) p.c.push_back(Qubit::system(i));
    for (int i = n_system / 2 + 1; i <= n_system; ++i) p.d.push_back(Qubit::system(i));
    return p;
  }

  void validate(const RegisterLayout& layout) const {
    std::vector<Qubit> all;
    for (const auto* blk : {&a, &b, &c, &d}) {
      if (blk->empty()) throw InvalidArgument("partition blocks must be nonempty");
      for (Qubit q : *blk) {
        if (!layout.contains(q)) throw InvalidArgument("partition qubit " + to_string(q) + " not in register");
        all.push_back(q);
      }
    }
    std::sort(all.begin(), all.end());
    if (std::adjacent_find(all.begin(), all.end()) != all.end()) throw InvalidArgument("partition blocks overlap");
    if (int(all.size()) != layout.total_qubits()) throw InvalidArgument("partition does not cover the register");
  }
};

namespace detail {
inline std::vector<Qubit> join(const std::vector<Qubit>& x, const std::vector<Qubit>& y) {
  std::vector<Qubit> out = x;
  out.insert(out.end(), y.begin(), y.end());
  return out;
}
} // namespace detail

/// S(A)+S(B)+S(C)+S(D) - S(AB) - S(AC) - S(BC).
inline double tripartite_mutual_information(const PureState& psi, const SubsystemPartition& part,
                                            LogBase base = LogBase::bits) {
  part.validate(psi.layout);
  auto s = [&](const std::vector<Qubit>& q) { return von_neumann_entropy(partial_trace(psi, q), base); };
  using detail::join;
  return s(part.a) + s(part.b) + s(part.c) + s(part.d) - s(join(part.a, part.b)) - s(join(part.a, part.c)) -
         s(join(part.b, part.c));
}

inline double tripartite_mutual_information(const BranchPair& bp, const SubsystemPartition& part,
                                            LogBase base = LogBase::bits) {
  return tripartite_mutual_information(bp.protocol_state(), part, base);
}

struct TimeAverageWindow {
  double t_i = 100.0;
  double t_f = 1000.0;
};

namespace detail {
inline double interpolate(std::span<const double> t, std::span<const double> y, double at) {
  auto it = std::lower_bound(t.begin(), t.end(), at);
  const auto k = std::size_t(it - t.begin());
  if (k < t.size() && t[k] == at) return y[k];
  const double w = (at - t[k - 1]) / (t[k] - t[k - 1]);
  return (1 - w) * y[k - 1] + w * y[k];
}
} // namespace detail

/// Trapezoidal mean of y over [t_i, t_f]; window edges off the grid are
/// linearly interpolated.
inline double time_average(std::span<const double> times, std::span<const double> values, TimeAverageWindow w) {
  if (times.size() != values.size() || times.size() < 2) throw InvalidArgument("time_average: need matching series of length >= 2");
  if (!(w.t_i >= 0.0 && w.t_i < w.t_f)) throw InvalidArgument("time_average: need 0 <= t_i < t_f");
  const double tol = 1e-9 * std::max(1.0, w.t_f);
  if (w.t_i < times.front() - tol || w.t_f > times.back() + tol)
    throw InvalidArgument("time_average: window [" + std::to_string(w.t_i) + ", " + std::to_string(w.t_f) +
                          "] outside the sampled grid");
  const double lo = std::max(w.t_i, times.front()), hi = std::min(w.t_f, times.back());
  std::vector<std::pair<double, double>> pts{{lo, detail::interpolate(times, values, lo)}};
  for (std::size_t k = 0; k < times.size(); ++k)
    if (times[k] > lo && times[k] < hi) pts.emplace_back(times[k], values[k]);
  pts.emplace_back(hi, detail::interpolate(times, values, hi));
  double acc = 0.0;
  for (std::size_t k = 1; k < pts.size(); ++k) acc += 0.5 * (pts[k].second + pts[k - 1].second) * (pts[k].first - pts[k - 1].first);
  return acc / (hi - lo);
}

inline double time_averaged_tmi(const QuenchTrajectory& traj, TimeAverageWindow w, const std::string& series = "I3") {
  return time_average(traj.times, traj.at(series), w);
}

/// Average of sigma^axis over the qubits of a reduced density matrix.
inline double subset_average_pauli(const DensityMatrix& rho, Axis axis) {
  const int k = int(rho.qubits.size());
  const RegisterLayout layout(k, false);
  std::vector<Qubit> local;
  for (int i = 1; i <= k; ++i) local.push_back(Qubit::system(i));
  const Eigen::MatrixXcd o = average_pauli(layout, local, axis).to_dense();
  return (o * rho.matrix).trace().real();
}

/// Tr{O (rho_t - rho_th)} with O the subset average of sigma^axis.
inline double local_observable_deviation(const DensityMatrix& rho_t, const DensityMatrix& rho_th, Axis axis) {
  if (rho_t.qubits != rho_th.qubits) throw InvalidArgument("local_observable_deviation: subsets differ");
  DensityMatrix diff{rho_t.matrix - rho_th.matrix, rho_t.qubits};
  return subset_average_pauli(diff, axis);
}

/// <sum_i sigma_i^axis / N> over every system qubit of a state.
inline double register_average_pauli(const PureState& psi, Axis axis) {
  const auto op = average_pauli(RegisterLayout(psi.layout.n_system, false),
                                [&] {
                                  std::vector<Qubit> q;
                                  for (int i = 1; i <= psi.layout.n_system; ++i) q.push_back(Qubit::system(i));
                                  return q;
                                }(),
                                axis);
  return expectation(op, psi.amplitudes);
}

enum class DistanceKind {
  max_eigenvalue,  // largest eigenvalue of rho1 - rho2
  operator_norm,   // largest |eigenvalue|
};

inline double rdm_distance(const DensityMatrix& rho1, const DensityMatrix& rho2,
                           DistanceKind kind = DistanceKind::max_eigenvalue) {
  if (rho1.matrix.rows() != rho2.matrix.rows() || rho1.matrix.cols() != rho2.matrix.cols())
    throw InvalidArgument("rdm_distance: dimension mismatch");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(rho1.matrix - rho2.matrix, Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  if (kind == DistanceKind::operator_norm) return ev.cwiseAbs().maxCoeff();
  return ev.maxCoeff();
}

// ---------------------------------------------------------------------------
// Cusp detection

struct CuspOptions {
  double t_relax = 2.0;
  int smoothing = 5;        // moving-average width (odd)
  double min_depth = 0.1;   // drop from the preceding maximum, in signal units
};

/// Time of the first pronounced dip after t_relax: a local minimum of the
/// moving-average signal lying at least `min_depth` below the preceding
/// local maximum (or the value at t_relax).
/// The reported time is the raw-series minimum within the smoothing window.
inline std::optional<double> detect_first_cusp(std::span<const double> times, std::span<const double> values,
                                               const CuspOptions& opt = {}) {
  if (times.size() != values.size()) throw InvalidArgument("detect_first_cusp: series length mismatch");
  if (opt.smoothing < 1 || opt.smoothing % 2 == 0) throw InvalidArgument("detect_first_cusp: smoothing width must be odd");
  if (!(opt.min_depth > 0.0)) throw InvalidArgument("detect_first_cusp: min_depth must be positive");
  const std::size_t n = values.size();
  const std::size_t half = std::size_t(opt.smoothing / 2);
  if (n < 2 * half + 3) return std::nullopt;

  std::vector<double> smooth(n, 0.0);
  for (std::size_t k = half; k + half < n; ++k) {
    double acc = 0.0;
    for (std::size_t j = k - half; j <= k + half; ++j) acc += values[j];
    smooth[k] = acc / double(2 * half + 1);
  }
  const std::size_t last = n - 1 - half;

  std::size_t k = half;
  while (k < last && times[k] < opt.t_relax) ++k;
  double peak = smooth[k];
  for (++k; k < last; ++k) {
    peak = std::max(peak, smooth[k]);
    const bool is_min = smooth[k] < smooth[k - 1] && smooth[k] <= smooth[k + 1];
    if (!is_min) continue;
    if (peak - smooth[k] < opt.min_depth) {
      peak = smooth[k];
      continue;
    }
    std::size_t best = k;
    for (std::size_t j = k - half; j <= k + half; ++j)
      if (values[j] < values[best]) best = j;
    return times[best];
  }
  return std::nullopt;
}

} // namespace tmi
