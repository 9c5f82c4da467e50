#pragma once

// Register geometry, Pauli strings and the spin-chain Hamiltonians as sparse
// Hermitian operators.
//
// Conventions: |0> is the sigma^z = +1 eigenstate. System qubit Q_i
// (i = 1..N) lives at bit i-1 of a basis index; the ancilla, when present,
// occupies bit N. Operators never touch the ancilla, so a state with an
// ancilla is two contiguous system-sized halves.

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "tmi/checksum.hpp"
#include "tmi/errors.hpp"

namespace tmi {

using cplx = std::complex<double>;
using Vector = Eigen::VectorXcd;
using Index = std::uint32_t;

inline constexpr cplx I{0.0, 1.0};

/// A qubit label: Q_1..Q_N for the system, or the ancilla Q_A.
class Qubit {
public:
  static constexpr Qubit system(int label) { return Qubit{label}; }
  static constexpr Qubit ancilla() { return Qubit{0}; }

  constexpr bool is_ancilla() const { return label_ == 0; }
  constexpr int label() const { return label_; }

  friend constexpr bool operator==(Qubit, Qubit) = default;
  friend constexpr auto operator<=>(Qubit, Qubit) = default;

private:
  constexpr explicit Qubit(int label) : label_(label) {}
  int label_;
};

inline std::string to_string(Qubit q) {
  return q.is_ancilla() ? std::string("QA") : "Q" + std::to_string(q.label());
}

/// Convenience for lists of system qubits, e.g. qubits({5, 6, 7}).
inline std::vector<Qubit> qubits(std::initializer_list<int> labels) {
  std::vector<Qubit> out;
  for (int l : labels) out.push_back(Qubit::system(l));
  return out;
}

struct RegisterLayout {
  int n_system = 0;
  bool has_ancilla = false;

  RegisterLayout() = default;
  RegisterLayout(int n, bool ancilla) : n_system(n), has_ancilla(ancilla) {
    if (n < 1) throw InvalidArgument("register needs at least one system qubit");
    if (total_qubits() > 30) throw ResourceError("register too large: " + std::to_string(total_qubits()) + " qubits");
  }

  int total_qubits() const { return n_system + (has_ancilla ? 1 : 0); }
  std::size_t dimension() const { return std::size_t{1} << total_qubits(); }
  std::size_t system_dimension() const { return std::size_t{1} << n_system; }

  bool contains(Qubit q) const {
    return q.is_ancilla() ? has_ancilla : (q.label() >= 1 && q.label() <= n_system);
  }

  int bit_of(Qubit q) const {
    if (!contains(q)) throw InvalidArgument("qubit " + to_string(q) + " not in register");
    return q.is_ancilla() ? n_system : q.label() - 1;
  }

  Qubit qubit_at(int bit) const {
    if (bit < 0 || bit >= total_qubits()) throw InvalidArgument("bit position out of range");
    return bit == n_system ? Qubit::ancilla() : Qubit::system(bit + 1);
  }

  std::vector<Qubit> all_qubits() const {
    std::vector<Qubit> out;
    for (int b = 0; b < total_qubits(); ++b) out.push_back(qubit_at(b));
    return out;
  }

  friend bool operator==(const RegisterLayout&, const RegisterLayout&) = default;
};

enum class Axis { x, y, z };

inline char axis_name(Axis a) { return a == Axis::x ? 'x' : a == Axis::y ? 'y' : 'z'; }

struct PauliFactor {
  Qubit qubit;
  Axis axis;
};

/// Memory ceiling for sparse operator construction, in bytes.
inline std::size_t& operator_memory_budget() {
  static std::size_t budget = std::size_t{4} << 30;
  return budget;
}

/// Sparse Hermitian operator in row-compressed storage. Immutable once built.
class HermitianOperator {
public:
  struct Triplet {
    Index row;
    Index col;
    cplx value;
  };

  HermitianOperator() = default;

  /// Builds from unsorted triplets; duplicates are summed and exact zeros
  /// dropped.
  static HermitianOperator from_triplets(int n_qubits, std::vector<Triplet> triplets) {
    HermitianOperator op;
    op.n_qubits_ = n_qubits;
    const std::size_t dim = std::size_t{1} << n_qubits;
    std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
      return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    op.row_ptr_.assign(dim + 1, 0);
    op.cols_.reserve(triplets.size());
    op.values_.reserve(triplets.size());
    for (std::size_t k = 0; k < triplets.size();) {
      const Index r = triplets[k].row, c = triplets[k].col;
      if (r >= dim || c >= dim) throw InvalidArgument("triplet index out of range");
      cplx sum = 0.0;
      for (; k < triplets.size() && triplets[k].row == r && triplets[k].col == c; ++k) sum += triplets[k].value;
      if (sum == cplx{0.0}) continue;
      op.cols_.push_back(c);
      op.values_.push_back(sum);
      ++op.row_ptr_[r + 1];
    }
    std::partial_sum(op.row_ptr_.begin(), op.row_ptr_.end(), op.row_ptr_.begin());
    op.finalize();
    return op;
  }

  static HermitianOperator from_dense(const Eigen::MatrixXcd& m) {
    const auto dim = static_cast<std::size_t>(m.rows());
    int n = 0;
    while ((std::size_t{1} << n) < dim) ++n;
    if ((std::size_t{1} << n) != dim || m.cols() != m.rows())
      throw InvalidArgument("dense operator must be square with power-of-two dimension");
    std::vector<Triplet> t;
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c)
        if (m(r, c) != cplx{0.0}) t.push_back({Index(r), Index(c), m(r, c)});
    return from_triplets(n, std::move(t));
  }

  int n_qubits() const { return n_qubits_; }
  std::size_t dimension() const { return std::size_t{1} << n_qubits_; }
  std::size_t nonzeros() const { return values_.size(); }
  bool is_real() const { return is_real_; }
  bool is_hermitian() const { return hermiticity_error_ <= 1e-12; }
  double hermiticity_error() const { return hermiticity_error_; }

  std::span<const std::size_t> row_ptr() const { return row_ptr_; }
  std::span<const Index> cols() const { return cols_; }
  std::span<const cplx> values() const { return values_; }

  cplx entry(Index r, Index c) const {
    auto b = cols_.begin() + row_ptr_[r], e = cols_.begin() + row_ptr_[r + 1];
    auto it = std::lower_bound(b, e, c);
    return (it != e && *it == c) ? values_[it - cols_.begin()] : cplx{0.0};
  }

  /// out = H * in. Input may be any multiple of the operator dimension; the
  /// extra (higher) qubits see the identity.
  void apply_into(std::span<const cplx> in, std::span<cplx> out) const {
    const std::size_t dim = dimension();
    if (in.size() != out.size() || in.size() % dim != 0 || in.empty())
      throw InvalidArgument("apply: dimension mismatch (operator " + std::to_string(dim) + ", vector " +
                            std::to_string(in.size()) + ")");
    for (std::size_t off = 0; off < in.size(); off += dim) {
      const cplx* x = in.data() + off;
      cplx* y = out.data() + off;
      if (is_real_) {
        for (std::size_t r = 0; r < dim; ++r) {
          cplx acc = 0.0;
          for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) acc += real_values_[k] * x[cols_[k]];
          y[r] = acc;
        }
      } else {
        for (std::size_t r = 0; r < dim; ++r) {
          cplx acc = 0.0;
          for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) acc += values_[k] * x[cols_[k]];
          y[r] = acc;
        }
      }
    }
  }

  Eigen::MatrixXcd to_dense() const {
    const auto dim = static_cast<Eigen::Index>(dimension());
    Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(dim, dim);
    for (std::size_t r = 0; r < dimension(); ++r)
      for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) m(Eigen::Index(r), cols_[k]) = values_[k];
    return m;
  }

  /// Identity-weighted shift and scale: a*H + b*1.
  HermitianOperator affine(double a, double b) const {
    std::vector<Triplet> t;
    t.reserve(nonzeros() + dimension());
    for (std::size_t r = 0; r < dimension(); ++r) {
      for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) t.push_back({Index(r), cols_[k], a * values_[k]});
      t.push_back({Index(r), Index(r), b});
    }
    return from_triplets(n_qubits_, std::move(t));
  }

  /// Operator on k additional idle high qubits: H (x) 1 with H on the low bits.
  HermitianOperator with_idle_high_qubits(int k) const {
    std::vector<Triplet> t;
    t.reserve(nonzeros() << k);
    const Index dim = Index(dimension());
    for (Index block = 0; block < (Index{1} << k); ++block)
      for (std::size_t r = 0; r < dimension(); ++r)
        for (std::size_t k2 = row_ptr_[r]; k2 < row_ptr_[r + 1]; ++k2)
          t.push_back({block * dim + Index(r), block * dim + cols_[k2], values_[k2]});
    return from_triplets(n_qubits_ + k, std::move(t));
  }

  /// Content hash of the sparse structure and values.
  std::string fingerprint() const {
    Sha256 h;
    h.update("tmi-operator-v1");
    h.update_value(n_qubits_);
    h.update(std::span<const std::size_t>(row_ptr_));
    h.update(std::span<const Index>(cols_));
    h.update(std::span<const cplx>(values_));
    return h.hex();
  }

private:
  void finalize() {
    is_real_ = std::all_of(values_.begin(), values_.end(), [](cplx v) { return v.imag() == 0.0; });
    real_values_.clear();
    if (is_real_) {
      real_values_.reserve(values_.size());
      for (cplx v : values_) real_values_.push_back(v.real());
    }
    hermiticity_error_ = 0.0;
    for (std::size_t r = 0; r < dimension(); ++r)
      for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
        hermiticity_error_ =
            std::max(hermiticity_error_, std::abs(values_[k] - std::conj(entry(cols_[k], Index(r)))));
  }

  int n_qubits_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<Index> cols_;
  std::vector<cplx> values_;
  std::vector<double> real_values_;
  bool is_real_ = true;
  double hermiticity_error_ = 0.0;
};

/// H v.
inline Vector act(const HermitianOperator& h, const Vector& in) {
  Vector out(in.size());
  h.apply_into(std::span<const cplx>(in.data(), std::size_t(in.size())), std::span<cplx>(out.data(), std::size_t(out.size())));
  return out;
}

/// <v|H|v>, with any extra high qubits of v treated as idle.
inline double expectation(const HermitianOperator& h, const Vector& v) {
  return v.dot(act(h, v)).real();
}

namespace detail {

struct PauliString {
  Index flip = 0;   // x or y on these bits
  Index zmask = 0;  // z or y on these bits (sign (-1)^bit)
  int n_y = 0;
};

inline PauliString pauli_string(const RegisterLayout& layout, std::span<const PauliFactor> factors) {
  if (factors.empty()) throw InvalidArgument("pauli_term needs at least one factor");
  PauliString p;
  Index used = 0;
  for (const auto& f : factors) {
    const Index bit = Index{1} << layout.bit_of(f.qubit);
    if (used & bit) throw InvalidArgument("duplicate qubit " + to_string(f.qubit) + " in Pauli string");
    used |= bit;
    if (f.axis != Axis::z) p.flip |= bit;
    if (f.axis != Axis::x) p.zmask |= bit;
    if (f.axis == Axis::y) ++p.n_y;
  }
  return p;
}

// <c ^ flip| P |c>: sigma^y|0> = i|1>, sigma^y|1> = -i|0>, i.e. i^{n_y} (-1)^{popcount(c & zmask)}.
inline cplx pauli_amplitude(const PauliString& p, Index col) {
  static constexpr cplx powers[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
  const double sign = (std::popcount(col & p.zmask) & 1) ? -1.0 : 1.0;
  return sign * powers[p.n_y & 3];
}

inline void check_budget(std::size_t dim, std::size_t nnz_per_row) {
  const std::size_t bytes = dim * nnz_per_row * (sizeof(cplx) + sizeof(double) + sizeof(Index)) * 2;
  if (bytes > operator_memory_budget())
    throw ResourceError("operator needs about " + std::to_string(bytes >> 20) + " MiB to build; budget is " +
                        std::to_string(operator_memory_budget() >> 20) + " MiB");
}

} // namespace detail

/// Accumulates weighted Pauli strings into a single sparse operator.
class PauliSum {
public:
  explicit PauliSum(RegisterLayout layout) : layout_(layout) {}

  PauliSum& add(double coefficient, std::initializer_list<PauliFactor> factors) {
    return add(coefficient, std::span<const PauliFactor>(factors.begin(), factors.size()));
  }
  PauliSum& add(double coefficient, std::span<const PauliFactor> factors) {
    if (!std::isfinite(coefficient)) throw InvalidArgument("non-finite Pauli coefficient");
    terms_.push_back({coefficient, detail::pauli_string(layout_, factors)});
    return *this;
  }

  HermitianOperator build() const {
    const Index dim = Index(layout_.dimension());
    detail::check_budget(dim, terms_.size() + 1);
    std::vector<HermitianOperator::Triplet> t;
    t.reserve(std::size_t(dim) * terms_.size());
    for (const auto& [coef, p] : terms_) {
      if (coef == 0.0) continue;
      for (Index c = 0; c < dim; ++c) t.push_back({c ^ p.flip, c, coef * detail::pauli_amplitude(p, c)});
    }
    return HermitianOperator::from_triplets(layout_.total_qubits(), std::move(t));
  }

private:
  struct Term {
    double coefficient;
    detail::PauliString string;
  };
  RegisterLayout layout_;
  std::vector<Term> terms_;
};

/// Tensor product of the given Pauli matrices with identity elsewhere.
inline HermitianOperator pauli_term(const RegisterLayout& layout, std::span<const PauliFactor> factors) {
  return PauliSum(layout).add(1.0, factors).build();
}
inline HermitianOperator pauli_term(const RegisterLayout& layout, std::initializer_list<PauliFactor> factors) {
  return pauli_term(layout, std::span<const PauliFactor>(factors.begin(), factors.size()));
}

struct IsingParams {
  double J = 1.0;
  double g = 1.05;
  double h = -0.5;
  int n = 0;

  bool non_integrable() const { return g * h != 0.0; }
};

struct SqaParams {
  double lambda = 1.0;
  double omega = 1.0;
  int n = 0;
};

/// H = -J sum_i Z_i Z_{i+1} + g sum_i X_i + h sum_i Z_i, open chain.
inline HermitianOperator build_ising(const IsingParams& p) {
  if (p.n < 1) throw InvalidArgument("Ising chain needs n >= 1");
  RegisterLayout layout(p.n, false);
  PauliSum sum(layout);
  for (int i = 1; i < p.n; ++i)
    sum.add(-p.J, {{Qubit::system(i), Axis::z}, {Qubit::system(i + 1), Axis::z}});
  for (int i = 1; i <= p.n; ++i) {
    sum.add(p.g, {{Qubit::system(i), Axis::x}});
    sum.add(p.h, {{Qubit::system(i), Axis::z}});
  }
  return sum.build();
}

namespace detail {
inline void add_xy_bonds(PauliSum& sum, double lambda, int n) {
  for (int i = 1; i < n; ++i) {
    sum.add(lambda, {{Qubit::system(i), Axis::x}, {Qubit::system(i + 1), Axis::x}});
    sum.add(lambda, {{Qubit::system(i), Axis::y}, {Qubit::system(i + 1), Axis::y}});
  }
}
} // namespace detail

/// H = lambda sum_i (X_i X_{i+1} + Y_i Y_{i+1}), open chain.
inline HermitianOperator build_xy(double lambda, int n) {
  if (n < 2) throw InvalidArgument("XY chain needs n >= 2");
  if (!std::isfinite(lambda)) throw InvalidArgument("non-finite XY coupling");
  PauliSum sum(RegisterLayout(n, false));
  detail::add_xy_bonds(sum, lambda, n);
  return sum.build();
}

/// Driven qubit array: XY chain plus a uniform sigma^y drive of amplitude omega.
inline HermitianOperator build_sqa(const SqaParams& p) {
  if (p.n < 2) throw InvalidArgument("qubit-array chain needs n >= 2");
  if (!std::isfinite(p.lambda) || !std::isfinite(p.omega)) throw InvalidArgument("non-finite qubit-array parameter");
  PauliSum sum(RegisterLayout(p.n, false));
  detail::add_xy_bonds(sum, p.lambda, p.n);
  for (int i = 1; i <= p.n; ++i) sum.add(p.omega, {{Qubit::system(i), Axis::y}});
  return sum.build();
}

/// Sum of sigma^axis over the given qubits divided by their count.
inline HermitianOperator average_pauli(const RegisterLayout& layout, std::span<const Qubit> on, Axis axis) {
  if (on.empty()) throw InvalidArgument("average_pauli needs at least one qubit");
  PauliSum sum(layout);
  for (Qubit q : on) sum.add(1.0 / double(on.size()), {{q, axis}});
  return sum.build();
}

} // namespace tmi
