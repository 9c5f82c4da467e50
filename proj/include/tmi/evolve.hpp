#pragma once

// Unitary time evolution: Lanczos-Krylov propagation with adaptive substeps,
// exact eigenbasis evolution for validation, and trajectory recording.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "tmi/density.hpp"
#include "tmi/hilbert.hpp"
#include "tmi/spectrum.hpp"

namespace tmi {

struct PropagatorConfig {
  int krylov_dimension = 30;
  /// Bound on the estimated error of each substep, per unit state norm.
  double tolerance = 1e-10;
  /// Substep budget per call to evolve(); exceeding it is a convergence error.
  long max_substeps = 10'000'000;
};

/// Reusable Lanczos-Krylov propagator for one Hamiltonian.
///
/// Each substep builds an orthonormal Krylov basis (Lanczos recurrence plus a
/// full re-orthogonalization pass), then takes the largest step whose error estimate
/// beta_m |[exp(-i tau T)]_{m,1}| stays below the tolerance.
class KrylovPropagator {
public:
  KrylovPropagator(const HermitianOperator& h, PropagatorConfig cfg = {}) : h_(&h), cfg_(cfg) {
    if (cfg_.krylov_dimension < 2) throw InvalidArgument("Krylov dimension must be at least 2");
    if (!(cfg_.tolerance > 0.0)) throw InvalidArgument("Krylov tolerance must be positive");
  }

  /// psi <- exp(-i H t) psi, in place.
  void evolve(Vector& psi, double t) {
    if (!std::isfinite(t)) throw InvalidArgument("evolve: non-finite time");
    if (std::size_t(psi.size()) % h_->dimension() != 0) throw InvalidArgument("evolve: dimension mismatch");
    double remaining = std::abs(t);
    const double direction = t < 0 ? -1.0 : 1.0;
    long steps = 0;
    while (remaining > 0.0) {
      const double norm = psi.norm();
      if (norm == 0.0) return;
      const double target = last_tau_ > 0.0 ? std::min(remaining, 2.0 * last_tau_) : remaining;
      build_basis(psi, norm, target);
      double tau = choose_step(remaining, norm);
      apply_step(psi, norm, direction * tau);
      remaining = (tau >= remaining) ? 0.0 : remaining - tau;
      last_tau_ = tau;
      if (++steps > cfg_.max_substeps)
        throw ConvergenceError("Krylov propagation exceeded its substep budget", last_error_);
    }
    substeps_ += steps;
  }

  long substeps() const { return substeps_; }
  double last_error_estimate() const { return last_error_; }

private:
  // Stops early once a step of length `target` already meets the tolerance.
  void build_basis(const Vector& psi, double norm, double target) {
    const Eigen::Index dim = psi.size();
    const int m_max = int(std::min<Eigen::Index>(cfg_.krylov_dimension, dim));
    basis_.resize(dim, m_max);
    alpha_.assign(std::size_t(m_max), 0.0);
    beta_.assign(std::size_t(m_max), 0.0);
    basis_.col(0) = psi / norm;
    w_.resize(dim);
    m_ = m_max;
    breakdown_ = false;
    const double scale = std::max(1.0, estimate_scale());
    for (int j = 0; j < m_max; ++j) {
      h_->apply_into({basis_.col(j).data(), std::size_t(dim)}, {w_.data(), std::size_t(dim)});
      alpha_[std::size_t(j)] = basis_.col(j).dot(w_).real();
      // three-term recurrence, then one full re-orthogonalization pass
      w_ -= alpha_[std::size_t(j)] * basis_.col(j);
      if (j > 0) w_ -= beta_[std::size_t(j - 1)] * basis_.col(j - 1);
      const Vector overlaps = basis_.leftCols(j + 1).adjoint() * w_;
      w_.noalias() -= basis_.leftCols(j + 1) * overlaps;
      const double b = w_.norm();
      beta_[std::size_t(j)] = b;
      if (b <= 1e-12 * scale) {
        m_ = j + 1;
        breakdown_ = true;
        break;
      }
      if (j + 1 < m_max) basis_.col(j + 1) = w_ / b;
      if (j >= 5 && j + 1 < m_max) {
        m_ = j + 1;
        diagonalize_tridiagonal();
        if (error_estimate(target, norm) <= 0.1 * cfg_.tolerance * norm) return;
        m_ = m_max;
      }
    }
    diagonalize_tridiagonal();
  }

  void diagonalize_tridiagonal() {
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(m_, m_);
    for (int j = 0; j < m_; ++j) {
      t(j, j) = alpha_[std::size_t(j)];
      if (j + 1 < m_) t(j, j + 1) = t(j + 1, j) = beta_[std::size_t(j)];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
    t_values_ = es.eigenvalues();
    t_vectors_ = es.eigenvectors();
  }

  double estimate_scale() const {
    if (scale_ > 0.0) return scale_;
    double mx = 0.0;
    auto rp = h_->row_ptr();
    auto vals = h_->values();
    for (std::size_t r = 0; r + 1 < rp.size(); ++r) {
      double s = 0.0;
      for (std::size_t k = rp[r]; k < rp[r + 1]; ++k) s += std::abs(vals[k]);
      mx = std::max(mx, s);
    }
    scale_ = mx;
    return mx;
  }

  // exp(-i tau T) e_1 in the Krylov basis
  Vector small_propagator(double tau) const {
    Vector phases(m_);
    for (int k = 0; k < m_; ++k) phases(k) = std::polar(1.0, -tau * t_values_(k)) * t_vectors_(0, k);
    return t_vectors_.cast<cplx>() * phases;
  }

  double error_estimate(double tau, double norm) const {
    if (breakdown_) return 0.0;
    return norm * beta_[std::size_t(m_ - 1)] * std::abs(small_propagator(tau)(m_ - 1));
  }

  double choose_step(double remaining, double norm) {
    double tau = remaining;
    if (last_tau_ > 0.0) tau = std::min(remaining, 2.0 * last_tau_);
    double err = error_estimate(tau, norm);
    int halvings = 0;
    while (err > cfg_.tolerance * norm) {
      tau *= 0.5;
      err = error_estimate(tau, norm);
      if (++halvings > 200 || tau < 1e-300)
        throw ConvergenceError("Krylov substep could not meet tolerance", err / norm);
    }
    if (halvings > 0) {
      // the accepted step lies in [tau, 2 tau); refine by bisection
      double lo = tau, hi = std::min(2.0 * tau, remaining);
      for (int it = 0; it < 6; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double e = error_estimate(mid, norm);
        if (e <= cfg_.tolerance * norm) {
          lo = mid;
          err = e;
        } else {
          hi = mid;
        }
      }
      tau = lo;
    }
    last_error_ = err / norm;
    return tau;
  }

  void apply_step(Vector& psi, double norm, double tau) {
    const Vector coeffs = small_propagator(tau);
    psi.noalias() = norm * (basis_.leftCols(m_) * coeffs);
  }

  const HermitianOperator* h_;
  PropagatorConfig cfg_;
  Eigen::MatrixXcd basis_;
  Vector w_;
  std::vector<double> alpha_, beta_;
  Eigen::VectorXd t_values_;
  Eigen::MatrixXd t_vectors_;
  int m_ = 0;
  bool breakdown_ = false;
  double last_tau_ = 0.0;
  double last_error_ = 0.0;
  mutable double scale_ = 0.0;
  long substeps_ = 0;
};

/// exp(-i H t)|psi> by Krylov propagation.
inline PureState krylov_evolve(const HermitianOperator& h, const PureState& psi, double t, const PropagatorConfig& cfg = {}) {
  PureState out = psi;
  if (t == 0.0) return out;
  KrylovPropagator prop(h, cfg);
  prop.evolve(out.amplitudes, t);
  return out;
}

/// Exact exp(-i H t)|psi> in the eigenbasis.
inline PureState spectral_evolve(const Spectrum& s, const PureState& psi, double t) {
  if (!s.has_vectors()) throw InvalidArgument("spectral_evolve needs eigenvectors");
  if (psi.layout.has_ancilla || std::size_t(psi.amplitudes.size()) != s.dimension())
    throw InvalidArgument("spectral_evolve: state does not match the spectrum's register");
  auto coefs = s.to_eigenbasis(psi.amplitudes);
  for (std::size_t b = 0; b < coefs.size(); ++b)
    for (Eigen::Index j = 0; j < coefs[b].size(); ++j) coefs[b](j) *= std::polar(1.0, -t * s.blocks()[b].values(j));
  return PureState(psi.layout, s.from_eigenbasis(coefs));
}

// ---------------------------------------------------------------------------
// Trajectories

using EvolvingState = std::variant<PureState, BranchPair>;

/// The (possibly reconstructed) full state of an evolving protocol.
inline PureState full_state(const EvolvingState& s) {
  if (const auto* p = std::get_if<PureState>(&s)) return *p;
  return std::get<BranchPair>(s).protocol_state();
}

struct Observer {
  std::string name;
  std::function<double(double time, const EvolvingState&)> measure;
};

/// Time grid plus named scalar series sharing that grid.
struct QuenchTrajectory {
  std::vector<double> times;
  std::vector<std::pair<std::string, std::vector<double>>> series;

  const std::vector<double>& at(const std::string& name) const {
    for (const auto& [n, v] : series)
      if (n == name) return v;
    throw InvalidArgument("trajectory has no series named " + name);
  }
};

/// Sample times: spacing dt_fine on [0, t_switch], dt_coarse on (t_switch, t_end].
inline std::vector<double> piecewise_grid(double t_end, double dt_fine, double t_switch, double dt_coarse) {
  if (!(dt_fine > 0) || !(dt_coarse > 0) || !(t_end >= 0)) throw InvalidArgument("time grid: spacings must be positive");
  std::vector<double> g;
  const double fine_end = std::min(t_switch, t_end);
  const long n_fine = std::lround(fine_end / dt_fine);
  for (long k = 0; k <= n_fine; ++k) g.push_back(double(k) * dt_fine);
  if (std::abs(g.back() - fine_end) > 1e-9 * std::max(1.0, fine_end)) g.push_back(fine_end);
  const double start = g.back();
  const long n_coarse = std::lround((t_end - start) / dt_coarse);
  for (long k = 1; k <= n_coarse; ++k) g.push_back(start + double(k) * dt_coarse);
  if (t_end - g.back() > 1e-9 * std::max(1.0, t_end)) g.push_back(t_end);
  return g;
}

inline std::vector<double> uniform_grid(double t_end, double dt) { return piecewise_grid(t_end, dt, t_end, dt); }

/// Evolves the initial state across `grid` (strictly increasing, starting at
/// 0) and records every observer at every grid point. Branch pairs evolve
/// each branch separately under the same Hamiltonian.
inline QuenchTrajectory evolve_trajectory(const HermitianOperator& h, EvolvingState state, const std::vector<double>& grid,
                                          const std::vector<Observer>& observers, const PropagatorConfig& cfg = {}) {
  if (grid.empty() || grid.front() != 0.0) throw InvalidArgument("trajectory grid must start at t = 0");
  for (std::size_t k = 1; k < grid.size(); ++k)
    if (!(grid[k] > grid[k - 1])) throw InvalidArgument("trajectory grid must be strictly increasing");
  if (auto* bp = std::get_if<BranchPair>(&state)) {
    if (std::size_t(bp->plus.size()) != h.dimension() || std::size_t(bp->minus.size()) != h.dimension())
      throw InvalidArgument("branch dimension does not match the Hamiltonian");
  }

  QuenchTrajectory traj;
  traj.times = grid;
  for (const auto& o : observers) traj.series.emplace_back(o.name, std::vector<double>{});

  KrylovPropagator prop_a(h, cfg), prop_b(h, cfg);
  double now = 0.0;
  for (double t : grid) {
    if (t > now) {
      if (auto* p = std::get_if<PureState>(&state)) {
        prop_a.evolve(p->amplitudes, t - now);
      } else {
        auto& bp = std::get<BranchPair>(state);
        prop_a.evolve(bp.plus, t - now);
        prop_b.evolve(bp.minus, t - now);
      }
      now = t;
    }
    for (std::size_t k = 0; k < observers.size(); ++k) traj.series[k].second.push_back(observers[k].measure(t, state));
  }
  return traj;
}

} // namespace tmi
