#pragma once

// Initial states of the scrambling protocol and their thermodynamic
// characterization (energy density, energy-matched inverse temperature).

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "tmi/density.hpp"
#include "tmi/hilbert.hpp"
#include "tmi/spectrum.hpp"

namespace tmi {

using Matrix2c = Eigen::Matrix2cd;
using Matrix4c = Eigen::Matrix4cd;
using Ket = Eigen::Vector2cd;

/// Direction on the Bloch sphere, theta in [0, pi], phi in [0, 2 pi).
class BlochDirection {
public:
  BlochDirection() = default;
  BlochDirection(double theta, double phi) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    theta = std::fmod(theta, two_pi);
    if (theta < 0) theta += two_pi;
    if (theta > std::numbers::pi) {
      theta = two_pi - theta;
      phi += std::numbers::pi;
    }
    phi = std::fmod(phi, two_pi);
    if (phi < 0) phi += two_pi;
    if (phi >= two_pi) phi = 0.0;
    theta_ = theta;
    phi_ = phi;
  }
  /// Angles given in units of pi.
  static BlochDirection from_pi(double theta_pi, double phi_pi) {
    return {theta_pi * std::numbers::pi, phi_pi * std::numbers::pi};
  }

  double theta() const { return theta_; }
  double phi() const { return phi_; }

  /// Unit vector (sin t cos p, sin t sin p, cos t).
  Eigen::Vector3d unit() const {
    return {std::sin(theta_) * std::cos(phi_), std::sin(theta_) * std::sin(phi_), std::cos(theta_)};
  }

private:
  double theta_ = 0.0;
  double phi_ = 0.0;
};

enum class Sign { plus, minus };

/// Eigenvector of n.sigma with eigenvalue +-1, phases fixed by the columns of
/// rotation_matrix().
inline Ket bloch_eigenstate(const BlochDirection& d, Sign sign) {
  const double c = std::cos(d.theta() / 2), s = std::sin(d.theta() / 2);
  if (sign == Sign::plus) return {cplx(c), std::polar(s, d.phi())};
  return {-std::polar(s, -d.phi()), cplx(c)};
}

inline Matrix2c pauli_matrix(Axis a) {
  Matrix2c m;
  switch (a) {
  case Axis::x: m << 0, 1, 1, 0; break;
  case Axis::y: m << 0, -I, I, 0; break;
  case Axis::z: m << 1, 0, 0, -1; break;
  }
  return m;
}

inline Matrix2c n_dot_sigma(const BlochDirection& d) {
  const Eigen::Vector3d n = d.unit();
  return n(0) * pauli_matrix(Axis::x) + n(1) * pauli_matrix(Axis::y) + n(2) * pauli_matrix(Axis::z);
}

/// R with columns |d,+> and |d,->.
inline Matrix2c rotation_matrix(const BlochDirection& d) {
  Matrix2c r;
  r.col(0) = bloch_eigenstate(d, Sign::plus);
  r.col(1) = bloch_eigenstate(d, Sign::minus);
  return r;
}

/// |d,+><d,+| (x) 1 + |d,-><d,-| (x) R sigma^x R^-1, control (ancilla) as the
/// more significant factor.
inline Matrix4c generalized_cnot(const BlochDirection& d) {
  const Matrix2c r = rotation_matrix(d);
  const Matrix2c x_tilde = r * pauli_matrix(Axis::x) * r.adjoint();
  const Ket p = bloch_eigenstate(d, Sign::plus), m = bloch_eigenstate(d, Sign::minus);
  const Matrix2c proj_p = p * p.adjoint(), proj_m = m * m.adjoint();
  Matrix4c out;
  out << proj_p(0, 0) * Matrix2c::Identity() + proj_m(0, 0) * x_tilde, proj_p(0, 1) * Matrix2c::Identity() + proj_m(0, 1) * x_tilde,
      proj_p(1, 0) * Matrix2c::Identity() + proj_m(1, 0) * x_tilde, proj_p(1, 1) * Matrix2c::Identity() + proj_m(1, 1) * x_tilde;
  return out;
}

/// Tensor product of single-qubit kets; locals[i] is the state of Q_{i+1}.
inline Vector product_state(std::span<const Ket> locals) {
  Vector v = Vector::Ones(1);
  for (const Ket& k : locals) {
    Vector next(2 * v.size());
    next.head(v.size()) = k(0) * v;
    next.tail(v.size()) = k(1) * v;
    v = std::move(next);
  }
  return v;
}

enum class StateFamily { isotropic, neel };

inline std::string to_string(StateFamily f) { return f == StateFamily::isotropic ? "isotropic" : "neel"; }

struct InitialStateSpec {
  StateFamily family = StateFamily::isotropic;
  BlochDirection direction;
  bool with_ancilla_ghz = true;
};

/// Single-qubit kets of the product part: Q_i in |d,+>, except that the Neel
/// family puts the even-indexed qubits in |d,->.
inline std::vector<Ket> local_kets(const InitialStateSpec& spec, int n) {
  if (spec.family == StateFamily::neel && n % 2 != 0)
    throw InvalidArgument("Neel-type states need an even number of system qubits, got " + std::to_string(n));
  std::vector<Ket> kets;
  for (int i = 1; i <= n; ++i) {
    const bool minus = spec.family == StateFamily::neel && i % 2 == 0;
    kets.push_back(bloch_eigenstate(spec.direction, minus ? Sign::minus : Sign::plus));
  }
  return kets;
}

/// The product state |theta,phi> (or its Neel variant) with no ancilla.
inline PureState product_initial_state(const InitialStateSpec& spec, int n) {
  const auto kets = local_kets(spec, n);
  return PureState(RegisterLayout(n, false), product_state(kets));
}

/// Ancilla branches of the protocol state: Q_1 in |d,+> or |d,->, the rest
/// as in the product state.
inline BranchPair scrambling_branches(const InitialStateSpec& spec, int n) {
  auto kets = local_kets(spec, n);
  BranchPair bp;
  bp.n_system = n;
  bp.ancilla_plus = bloch_eigenstate(spec.direction, Sign::plus);
  bp.ancilla_minus = bloch_eigenstate(spec.direction, Sign::minus);
  kets[0] = bp.ancilla_plus;
  bp.plus = product_state(kets);
  kets[0] = bp.ancilla_minus;
  bp.minus = product_state(kets);
  return bp;
}

/// Initial state of the protocol. With the ancilla, (Q_A, Q_1) carry the GHZ
/// pair produced by the generalized CNOT.
inline PureState scrambling_initial_state(const InitialStateSpec& spec, const RegisterLayout& layout) {
  if (layout.has_ancilla != spec.with_ancilla_ghz)
    throw InvalidArgument("layout ancilla flag does not match the initial-state specification");
  if (!spec.with_ancilla_ghz) return product_initial_state(spec, layout.n_system);
  return scrambling_branches(spec, layout.n_system).protocol_state();
}

struct SpectrumEdges {
  double e_min;
  double e_max;
};

inline SpectrumEdges edges_of(const Spectrum& s) { return {s.e_min(), s.e_max()}; }

/// (<H> - E_min) / (E_max - E_min). States carrying an ancilla are measured
/// with H (x) 1.
inline double energy_density(const PureState& psi, const HermitianOperator& h, SpectrumEdges edges) {
  if (!(edges.e_min < edges.e_max)) throw InvalidArgument("energy_density: need E_min < E_max");
  return (expectation(h, psi.amplitudes) - edges.e_min) / (edges.e_max - edges.e_min);
}

struct InverseTemperatureOptions {
  double energy_tolerance = 1e-10;
  double beta_cap = 500.0;
};

/// beta with Tr[rho(beta) H] = target, by bracketed bisection. Targets within
/// 1e-12 of the spectral range from an edge count as the edge.
inline double inverse_temperature(double target, const Eigen::VectorXd& energies, const InverseTemperatureOptions& opt = {}) {
  const double lo_e = energies.minCoeff(), hi_e = energies.maxCoeff();
  const double edge_tol = 1e-12 * std::max(1.0, hi_e - lo_e);
  if (!(target > lo_e + edge_tol)) throw NoFiniteBeta("target energy at or below the ground-state edge E_min", NoFiniteBeta::Edge::lower);
  if (!(target < hi_e - edge_tol)) throw NoFiniteBeta("target energy at or above the top edge E_max", NoFiniteBeta::Edge::upper);
  auto f = [&](double b) { return thermal_energy(energies, b) - target; };  // decreasing in b
  double lo = -1.0, hi = 1.0;
  while (f(lo) < 0.0) {
    if (lo <= -opt.beta_cap)
      throw NoFiniteBeta("target energy needs beta below -" + std::to_string(opt.beta_cap), NoFiniteBeta::Edge::cap);
    lo = std::max(2.0 * lo, -opt.beta_cap);
  }
  while (f(hi) > 0.0) {
    if (hi >= opt.beta_cap)
      throw NoFiniteBeta("target energy needs beta above " + std::to_string(opt.beta_cap), NoFiniteBeta::Edge::cap);
    hi = std::min(2.0 * hi, opt.beta_cap);
  }
  for (int it = 0; it < 400; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double v = f(mid);
    if (std::abs(v) <= opt.energy_tolerance || hi - lo <= 4 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(mid)))
      return mid;
    (v > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

inline double inverse_temperature(const PureState& psi, const HermitianOperator& h, const Spectrum& s,
                                  const InverseTemperatureOptions& opt = {}) {
  return inverse_temperature(expectation(h, psi.amplitudes), s.eigenvalues(), opt);
}

} // namespace tmi
