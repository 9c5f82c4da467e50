#pragma once

// Pure states, density matrices and partial traces.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "tmi/hilbert.hpp"

namespace tmi {

struct PureState {
  RegisterLayout layout;
  Vector amplitudes;

  PureState() = default;
  PureState(RegisterLayout l, Vector amps) : layout(l), amplitudes(std::move(amps)) {
    if (std::size_t(amplitudes.size()) != layout.dimension())
      throw InvalidArgument("state length " + std::to_string(amplitudes.size()) + " does not match register of " +
                            std::to_string(layout.total_qubits()) + " qubits");
  }

  double norm() const { return amplitudes.norm(); }
  bool is_normalized(double tol = 1e-10) const { return std::abs(norm() - 1.0) <= tol; }
};

/// Dense density matrix on an ordered set of qubits. Basis index bit j
/// corresponds to qubits[j] (ascending register order).
struct DensityMatrix {
  Eigen::MatrixXcd matrix;
  std::vector<Qubit> qubits;

  std::size_t dimension() const { return std::size_t(matrix.rows()); }
  double trace() const { return matrix.trace().real(); }
};

/// The two ancilla branches of a protocol state:
///   (|d,+>_A |plus> + |d,-> _A |minus>) / sqrt(2)
/// with ancilla_plus / ancilla_minus the ancilla kets |d,+>, |d,->.
struct BranchPair {
  Vector plus;
  Vector minus;
  Eigen::Vector2cd ancilla_plus;
  Eigen::Vector2cd ancilla_minus;
  int n_system = 0;

  /// Full (N+1)-qubit state with the ancilla on the highest bit.
  PureState protocol_state() const {
    const RegisterLayout layout(n_system, true);
    const Eigen::Index half = plus.size();
    Vector full(2 * half);
    const double s = 1.0 / std::sqrt(2.0);
    for (int a = 0; a < 2; ++a)
      full.segment(a * half, half) = s * (ancilla_plus(a) * plus + ancilla_minus(a) * minus);
    return PureState(layout, std::move(full));
  }
};

namespace detail {

// Bit positions of `keep` (sorted ascending) and of the complement.
struct BitSplit {
  std::vector<int> keep_bits;
  std::vector<int> rest_bits;
};

inline BitSplit split_bits(const RegisterLayout& layout, std::span<const Qubit> keep) {
  if (keep.empty()) throw InvalidArgument("partial trace needs a nonempty qubit set");
  BitSplit s;
  std::vector<bool> used(std::size_t(layout.total_qubits()), false);
  for (Qubit q : keep) {
    const int b = layout.bit_of(q);
    if (used[std::size_t(b)]) throw InvalidArgument("duplicate qubit " + to_string(q));
    used[std::size_t(b)] = true;
  }
  for (int b = 0; b < layout.total_qubits(); ++b) (used[std::size_t(b)] ? s.keep_bits : s.rest_bits).push_back(b);
  return s;
}

// Table of basis offsets: entry i spreads the bits of i onto `bits`.
inline std::vector<Index> deposit_table(const std::vector<int>& bits) {
  std::vector<Index> t(std::size_t{1} << bits.size(), 0);
  for (std::size_t i = 1; i < t.size(); ++i) {
    const int low = std::countr_zero(i);
    t[i] = t[i & (i - 1)] | (Index{1} << bits[std::size_t(low)]);
  }
  return t;
}

/// Reusable gather plan for reduced density matrices of pure vectors.
class RdmPlan {
public:
  RdmPlan(const RegisterLayout& layout, std::span<const Qubit> keep) : split_(split_bits(layout, keep)) {
    keep_off_ = deposit_table(split_.keep_bits);
    rest_off_ = deposit_table(split_.rest_bits);
    for (int b : split_.keep_bits) qubits_.push_back(layout.qubit_at(b));
    gathered_.resize(Eigen::Index(keep_off_.size()), Eigen::Index(rest_off_.size()));
  }

  const std::vector<Qubit>& qubits() const { return qubits_; }
  Eigen::Index kept_dimension() const { return Eigen::Index(keep_off_.size()); }

  /// rho += weight * Tr_rest |psi><psi|
  void accumulate(const cplx* psi, double weight, Eigen::MatrixXcd& rho) {
    for (std::size_t c = 0; c < rest_off_.size(); ++c) {
      const cplx* base = psi + rest_off_[c];
      for (std::size_t r = 0; r < keep_off_.size(); ++r) gathered_(Eigen::Index(r), Eigen::Index(c)) = base[keep_off_[r]];
    }
    rho.noalias() += weight * gathered_ * gathered_.adjoint();
  }

private:
  BitSplit split_;
  std::vector<Index> keep_off_;
  std::vector<Index> rest_off_;
  std::vector<Qubit> qubits_;
  Eigen::MatrixXcd gathered_;
};

} // namespace detail

/// Reduced density matrix of a pure state, built from the amplitudes directly.
inline DensityMatrix partial_trace(const PureState& psi, std::span<const Qubit> keep) {
  detail::RdmPlan plan(psi.layout, keep);
  DensityMatrix out;
  out.qubits = plan.qubits();
  out.matrix = Eigen::MatrixXcd::Zero(plan.kept_dimension(), plan.kept_dimension());
  plan.accumulate(psi.amplitudes.data(), 1.0, out.matrix);
  return out;
}
inline DensityMatrix partial_trace(const PureState& psi, std::initializer_list<Qubit> keep) {
  return partial_trace(psi, std::span<const Qubit>(keep.begin(), keep.size()));
}

/// Partial trace of a density matrix. `rho.qubits` must list the register
/// qubits of its basis in ascending order; `keep` must be a subset.
inline DensityMatrix partial_trace(const DensityMatrix& rho, std::span<const Qubit> keep) {
  if (keep.empty()) throw InvalidArgument("partial trace needs a nonempty qubit set");
  std::vector<int> keep_bits, rest_bits;
  for (std::size_t b = 0; b < rho.qubits.size(); ++b) {
    const bool kept = std::find(keep.begin(), keep.end(), rho.qubits[b]) != keep.end();
    (kept ? keep_bits : rest_bits).push_back(int(b));
  }
  if (keep_bits.size() != keep.size()) throw InvalidArgument("partial trace: kept qubit not present in density matrix");
  const auto ko = detail::deposit_table(keep_bits);
  const auto ro = detail::deposit_table(rest_bits);
  DensityMatrix out;
  for (int b : keep_bits) out.qubits.push_back(rho.qubits[std::size_t(b)]);
  out.matrix = Eigen::MatrixXcd::Zero(Eigen::Index(ko.size()), Eigen::Index(ko.size()));
  for (std::size_t i = 0; i < ko.size(); ++i)
    for (std::size_t j = 0; j < ko.size(); ++j) {
      cplx acc = 0.0;
      for (Index r : ro) acc += rho.matrix(ko[i] | r, ko[j] | r);
      out.matrix(Eigen::Index(i), Eigen::Index(j)) = acc;
    }
  return out;
}

} // namespace tmi
