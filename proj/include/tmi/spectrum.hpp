#pragma once

// Full eigendecomposition of spin-chain Hamiltonians, density of states,
// Gibbs states and thermal reduced density matrices.
//
// The dense solve is block-diagonalized before calling LAPACK: a diagonal
// phase gauge is sought that makes the matrix real, and basis permutations
// that commute with it (chain reflection, global spin flip) split the space
// into character sectors. Eigenvectors are kept per sector and mapped back
// to the computational basis on demand.

#include <lapacke.h>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "tmi/density.hpp"
#include "tmi/hilbert.hpp"

namespace tmi {

/// Basis permutations tested as symmetries of a Hamiltonian.
enum class Permutation : std::int32_t { reflection = 1, global_flip = 2 };

inline Index permute(Permutation p, Index s, int n) {
  if (p == Permutation::global_flip) return s ^ ((Index{1} << n) - 1);
  Index out = 0;
  for (int b = 0; b < n; ++b)
    if (s >> b & 1u) out |= Index{1} << (n - 1 - b);
  return out;
}

/// One character sector of the group generated by commuting involutive
/// basis permutations. Each basis vector is a signed, normalized sum over an
/// orbit of computational states.
class SectorBasis {
public:
  std::vector<Permutation> generators;
  std::vector<int> characters;  // +-1 per generator
  int n_qubits = 0;

  std::size_t dimension() const { return member_ptr_.size() - 1; }

  /// Computational states (and coefficients) composing basis vector j.
  std::span<const Index> members(std::size_t j) const {
    return {member_state_.data() + member_ptr_[j], member_ptr_[j + 1] - member_ptr_[j]};
  }
  std::span<const double> member_coefs(std::size_t j) const {
    return {member_coef_.data() + member_ptr_[j], member_ptr_[j + 1] - member_ptr_[j]};
  }
  double coef(Index s) const { return coef_[s]; }
  std::int32_t local_index(Index s) const { return index_[s]; }

  /// out_j = <b_j|full>
  void project(const cplx* full, cplx* out) const {
    for (std::size_t j = 0; j < dimension(); ++j) {
      cplx acc = 0.0;
      for (std::size_t k = member_ptr_[j]; k < member_ptr_[j + 1]; ++k) acc += member_coef_[k] * full[member_state_[k]];
      out[j] = acc;
    }
  }
  /// full += sum_j c_j |b_j>
  void embed(const cplx* c, cplx* full) const {
    for (std::size_t j = 0; j < dimension(); ++j)
      for (std::size_t k = member_ptr_[j]; k < member_ptr_[j + 1]; ++k) full[member_state_[k]] += member_coef_[k] * c[j];
  }

  /// All character sectors for the given generators (empty list: one sector).
  static std::vector<std::shared_ptr<const SectorBasis>> build_all(int n, const std::vector<Permutation>& gens) {
    const std::size_t dim = std::size_t{1} << n;
    const std::size_t group = std::size_t{1} << gens.size();
    auto element = [&](std::size_t g, Index s) {
      for (std::size_t k = 0; k < gens.size(); ++k)
        if (g >> k & 1) s = permute(gens[k], s, n);
      return s;
    };
    std::vector<std::shared_ptr<const SectorBasis>> out;
    for (std::size_t chi = 0; chi < group; ++chi) {
      auto sec = std::make_shared<SectorBasis>();
      sec->generators = gens;
      sec->n_qubits = n;
      for (std::size_t k = 0; k < gens.size(); ++k) sec->characters.push_back((chi >> k & 1) ? -1 : 1);
      sec->coef_.assign(dim, 0.0);
      sec->index_.assign(dim, -1);
      sec->member_ptr_.push_back(0);
      for (Index s = 0; s < dim; ++s) {
        bool representative = true;
        for (std::size_t g = 1; g < group && representative; ++g) representative = element(g, s) >= s;
        if (!representative) continue;
        std::vector<std::pair<Index, double>> terms;
        for (std::size_t g = 0; g < group; ++g) {
          const double sign = (std::popcount(g & chi) & 1) ? -1.0 : 1.0;
          const Index t = element(g, s);
          auto it = std::find_if(terms.begin(), terms.end(), [t](const auto& p) { return p.first == t; });
          if (it == terms.end()) terms.emplace_back(t, sign);
          else it->second += sign;
        }
        double norm2 = 0.0;
        for (const auto& [t, c] : terms) norm2 += c * c;
        if (norm2 < 0.5) continue;
        std::sort(terms.begin(), terms.end());
        const auto j = std::int32_t(sec->dimension());
        for (const auto& [t, c] : terms) {
          if (c == 0.0) continue;
          sec->member_state_.push_back(t);
          sec->member_coef_.push_back(c / std::sqrt(norm2));
          sec->coef_[t] = c / std::sqrt(norm2);
          sec->index_[t] = j;
        }
        sec->member_ptr_.push_back(sec->member_state_.size());
      }
      if (sec->dimension() > 0) out.push_back(std::move(sec));
    }
    return out;
  }

private:
  std::vector<std::size_t> member_ptr_;
  std::vector<Index> member_state_;
  std::vector<double> member_coef_;
  std::vector<double> coef_;
  std::vector<std::int32_t> index_;
};

struct SpectrumOptions {
  /// Largest Hilbert-space dimension accepted by the dense solver.
  std::size_t dense_limit = std::size_t{1} << 14;
  bool use_symmetries = true;
};

class Spectrum;
Spectrum full_spectrum(const HermitianOperator& h, bool want_vectors, const SpectrumOptions& opt = {});

/// Ascending eigenvalues, optionally with eigenvectors held per symmetry
/// sector. Immutable after construction.
class Spectrum {
public:
  struct Block {
    std::shared_ptr<const SectorBasis> basis;
    Eigen::VectorXd values;
    Eigen::MatrixXd real_vectors;     // used when the gauged problem is real
    Eigen::MatrixXcd complex_vectors; // otherwise
    bool is_real = true;

    Eigen::Index size() const { return values.size(); }
  };

  const Eigen::VectorXd& eigenvalues() const { return eigenvalues_; }
  double e_min() const { return eigenvalues_(0); }
  double e_max() const { return eigenvalues_(eigenvalues_.size() - 1); }
  std::size_t dimension() const { return std::size_t(eigenvalues_.size()); }
  int n_qubits() const { return n_qubits_; }
  bool has_vectors() const { return has_vectors_; }
  const std::string& fingerprint() const { return fingerprint_; }
  const std::vector<Block>& blocks() const { return blocks_; }
  const std::vector<Permutation>& symmetries() const { return symmetries_; }
  bool has_gauge() const { return gauge_.size() > 0; }

  /// Column j of block b as a computational-basis vector.
  Vector block_vector(std::size_t b, Eigen::Index j) const {
    require_vectors();
    const Block& blk = blocks_[b];
    Vector v = Vector::Zero(Eigen::Index(dimension()));
    Vector c = blk.is_real ? Vector(blk.real_vectors.col(j).cast<cplx>()) : Vector(blk.complex_vectors.col(j));
    blk.basis->embed(c.data(), v.data());
    if (has_gauge()) v.array() *= gauge_.array();
    return v;
  }

  /// Eigenvector for the k-th smallest eigenvalue.
  Vector eigenvector(std::size_t k) const {
    require_vectors();
    const auto [b, j] = order_.at(k);
    return block_vector(b, j);
  }

  /// Expansion coefficients of psi, one vector per block.
  std::vector<Vector> to_eigenbasis(const Vector& psi) const {
    require_vectors();
    if (std::size_t(psi.size()) != dimension()) throw InvalidArgument("to_eigenbasis: dimension mismatch");
    Vector phased = has_gauge() ? Vector(gauge_.conjugate().cwiseProduct(psi)) : psi;
    std::vector<Vector> out;
    for (const Block& blk : blocks_) {
      Vector p(blk.size());
      blk.basis->project(phased.data(), p.data());
      if (blk.is_real) {
        Vector c(blk.size());
        c.real() = blk.real_vectors.transpose() * p.real();
        c.imag() = blk.real_vectors.transpose() * p.imag();
        out.push_back(std::move(c));
      } else {
        out.push_back(blk.complex_vectors.adjoint() * p);
      }
    }
    return out;
  }

  Vector from_eigenbasis(const std::vector<Vector>& coefs) const {
    require_vectors();
    if (coefs.size() != blocks_.size()) throw InvalidArgument("from_eigenbasis: block count mismatch");
    Vector full = Vector::Zero(Eigen::Index(dimension()));
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      const Block& blk = blocks_[b];
      Vector p(blk.size());
      if (blk.is_real) {
        p.real() = blk.real_vectors * coefs[b].real();
        p.imag() = blk.real_vectors * coefs[b].imag();
      } else {
        p = blk.complex_vectors * coefs[b];
      }
      blk.basis->embed(p.data(), full.data());
    }
    if (has_gauge()) full.array() *= gauge_.array();
    return full;
  }

  /// Calls f(energy, eigenvector) for every eigenpair, block by block.
  template <class F> void for_each_eigenvector(F&& f) const {
    for (std::size_t b = 0; b < blocks_.size(); ++b)
      for (Eigen::Index j = 0; j < blocks_[b].size(); ++j) f(blocks_[b].values(j), block_vector(b, j));
  }

  void save(const std::string& path) const;
  static Spectrum load(const std::string& path);

private:
  friend Spectrum full_spectrum(const HermitianOperator&, bool, const SpectrumOptions&);

  void require_vectors() const {
    if (!has_vectors_) throw InvalidArgument("spectrum was computed without eigenvectors");
  }

  void finish() {
    std::vector<std::pair<double, std::pair<std::size_t, Eigen::Index>>> all;
    for (std::size_t b = 0; b < blocks_.size(); ++b)
      for (Eigen::Index j = 0; j < blocks_[b].size(); ++j) all.push_back({blocks_[b].values(j), {b, j}});
    std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    eigenvalues_.resize(Eigen::Index(all.size()));
    order_.clear();
    for (std::size_t k = 0; k < all.size(); ++k) {
      eigenvalues_(Eigen::Index(k)) = all[k].first;
      order_.push_back(all[k].second);
    }
  }

  int n_qubits_ = 0;
  bool has_vectors_ = false;
  std::string fingerprint_;
  Eigen::VectorXd eigenvalues_;
  Vector gauge_;
  std::vector<Permutation> symmetries_;
  std::vector<Block> blocks_;
  std::vector<std::pair<std::size_t, Eigen::Index>> order_;
};

namespace detail {

/// Diagonal phases d with conj(d_r) H_rc d_c real for all entries, if any.
inline std::optional<Vector> find_real_gauge(const HermitianOperator& h) {
  const std::size_t dim = h.dimension();
  Vector d = Vector::Zero(Eigen::Index(dim));
  std::vector<bool> seen(dim, false);
  auto rp = h.row_ptr();
  auto cols = h.cols();
  auto vals = h.values();
  for (Index root = 0; root < dim; ++root) {
    if (seen[root]) continue;
    seen[root] = true;
    d(root) = 1.0;
    std::queue<Index> q;
    q.push(root);
    while (!q.empty()) {
      const Index u = q.front();
      q.pop();
      for (std::size_t k = rp[u]; k < rp[u + 1]; ++k) {
        const Index w = cols[k];
        if (seen[w] || w == u) continue;
        seen[w] = true;
        // conj(d_u) H_uw d_w = |H_uw|
        d(w) = d(u) * std::conj(vals[k]) / std::abs(vals[k]);
        q.push(w);
      }
    }
  }
  for (std::size_t r = 0; r < dim; ++r)
    for (std::size_t k = rp[r]; k < rp[r + 1]; ++k) {
      const cplx g = std::conj(d(Eigen::Index(r))) * vals[k] * d(cols[k]);
      if (std::abs(g.imag()) > 1e-13 * std::max(1.0, std::abs(vals[k]))) return std::nullopt;
    }
  return d;
}

inline cplx gauged_entry(const HermitianOperator& h, const Vector* gauge, Index r, std::size_t k) {
  const cplx v = h.values()[k];
  if (!gauge) return v;
  return std::conj((*gauge)(r)) * v * (*gauge)(h.cols()[k]);
}

inline bool commutes(const HermitianOperator& h, const Vector* gauge, Permutation p) {
  const int n = h.n_qubits();
  auto rp = h.row_ptr();
  auto cols = h.cols();
  for (Index r = 0; r < h.dimension(); ++r) {
    const Index pr = permute(p, r, n);
    if (rp[r + 1] - rp[r] != rp[pr + 1] - rp[pr]) return false;
    for (std::size_t k = rp[r]; k < rp[r + 1]; ++k) {
      const Index pc = permute(p, cols[k], n);
      auto b = cols.begin() + std::ptrdiff_t(rp[pr]), e = cols.begin() + std::ptrdiff_t(rp[pr + 1]);
      auto it = std::lower_bound(b, e, pc);
      if (it == e || *it != pc) return false;
      const cplx a = gauged_entry(h, gauge, r, k);
      const cplx bval = gauged_entry(h, gauge, pr, std::size_t(it - cols.begin()));
      if (std::abs(a - bval) > 1e-13 * std::max(1.0, std::abs(a))) return false;
    }
  }
  return true;
}

template <class Matrix>
Matrix sector_block(const HermitianOperator& h, const Vector* gauge, const SectorBasis& sec) {
  using Scalar = typename Matrix::Scalar;
  const auto d = Eigen::Index(sec.dimension());
  Matrix m = Matrix::Zero(d, d);
  auto rp = h.row_ptr();
  auto cols = h.cols();
  for (Eigen::Index j = 0; j < d; ++j) {
    auto states = sec.members(std::size_t(j));
    auto coefs = sec.member_coefs(std::size_t(j));
    for (std::size_t m_idx = 0; m_idx < states.size(); ++m_idx) {
      const Index s = states[m_idx];
      // column s of H is the conjugate of row s
      for (std::size_t k = rp[s]; k < rp[s + 1]; ++k) {
        const Index r = cols[k];
        const std::int32_t i = sec.local_index(r);
        if (i < 0) continue;
        const cplx v = std::conj(gauged_entry(h, gauge, s, k)) * sec.coef(r) * coefs[m_idx];
        if constexpr (std::is_same_v<Scalar, double>) m(i, j) += v.real();
        else m(i, j) += v;
      }
    }
  }
  return m;
}

inline void lapack_check(int info, const char* routine) {
  if (info != 0) throw std::runtime_error(std::string(routine) + " failed with info=" + std::to_string(info));
}

// Eigen-decomposition in place: on return m holds eigenvectors when wanted.
inline Eigen::VectorXd solve_block(Eigen::MatrixXd& m, bool want_vectors) {
  Eigen::VectorXd w(m.rows());
  if (m.rows() == 0) return w;
  lapack_check(LAPACKE_dsyevd(LAPACK_COL_MAJOR, want_vectors ? 'V' : 'N', 'L', int(m.rows()), m.data(), int(m.rows()), w.data()),
               "dsyevd");
  if (!want_vectors) m.resize(0, 0);
  return w;
}
inline Eigen::VectorXd solve_block(Eigen::MatrixXcd& m, bool want_vectors) {
  Eigen::VectorXd w(m.rows());
  if (m.rows() == 0) return w;
  lapack_check(LAPACKE_zheevd(LAPACK_COL_MAJOR, want_vectors ? 'V' : 'N', 'L', int(m.rows()),
                              reinterpret_cast<lapack_complex_double*>(m.data()), int(m.rows()), w.data()),
               "zheevd");
  if (!want_vectors) m.resize(0, 0);
  return w;
}

/// Residual of a dsyevd solve on a fixed 160 x 160 test matrix. Some
/// OpenBLAS kernel selections return wrong eigenvectors once the
/// divide-and-conquer path engages; this catches them before real work.
inline double lapack_probe_residual() {
  const int n = 160;
  Eigen::MatrixXd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = std::sin(0.37 * (i + 1) * (j + 1)) + std::sin(0.37 * (j + 1) * (i + 1));
  Eigen::MatrixXd v = a;
  const Eigen::VectorXd w = solve_block(v, true);
  return (a * v - v * w.asDiagonal()).cwiseAbs().maxCoeff();
}

} // namespace detail

/// True when the linked LAPACK passes the eigenvector self-check.
inline bool lapack_eigensolver_ok() {
  static const bool ok = detail::lapack_probe_residual() < 1e-10;
  return ok;
}

/// Complete eigendecomposition of h.
inline Spectrum full_spectrum(const HermitianOperator& h, bool want_vectors, const SpectrumOptions& opt) {
  if (h.dimension() > opt.dense_limit)
    throw ResourceError("dense eigendecomposition of dimension " + std::to_string(h.dimension()) +
                        " exceeds the configured limit " + std::to_string(opt.dense_limit) +
                        "; use a smaller chain or raise the limit");
  if (!h.is_hermitian()) throw InvalidArgument("full_spectrum: operator is not Hermitian");
  if (!lapack_eigensolver_ok())
    throw ConvergenceError("LAPACK eigensolver self-check failed; with OpenBLAS set OPENBLAS_CORETYPE (e.g. Haswell)",
                           detail::lapack_probe_residual());

  Spectrum s;
  s.n_qubits_ = h.n_qubits();
  s.has_vectors_ = want_vectors;
  s.fingerprint_ = h.fingerprint();

  bool real = h.is_real();
  if (!real) {
    if (auto g = detail::find_real_gauge(h)) {
      s.gauge_ = std::move(*g);
      real = true;
    }
  }
  const Vector* gauge = s.has_gauge() ? &s.gauge_ : nullptr;

  if (opt.use_symmetries && h.n_qubits() >= 2)
    for (Permutation p : {Permutation::reflection, Permutation::global_flip})
      if (detail::commutes(h, gauge, p)) s.symmetries_.push_back(p);

  for (auto& sec : SectorBasis::build_all(h.n_qubits(), s.symmetries_)) {
    Spectrum::Block blk;
    blk.basis = sec;
    blk.is_real = real;
    if (real) {
      blk.real_vectors = detail::sector_block<Eigen::MatrixXd>(h, gauge, *sec);
      blk.values = detail::solve_block(blk.real_vectors, want_vectors);
    } else {
      blk.complex_vectors = detail::sector_block<Eigen::MatrixXcd>(h, gauge, *sec);
      blk.values = detail::solve_block(blk.complex_vectors, want_vectors);
    }
    s.blocks_.push_back(std::move(blk));
  }
  s.finish();
  return s;
}

// ---------------------------------------------------------------------------
// Thermal quantities

/// Boltzmann weights e^{-beta(E_k - E_ref)}, E_ref chosen so no weight exceeds 1.
inline double boltzmann_reference(const Eigen::VectorXd& energies, double beta) {
  return beta >= 0.0 ? energies.minCoeff() : energies.maxCoeff();
}

/// Tr[rho(beta) H] from the eigenvalues alone.
inline double thermal_energy(const Eigen::VectorXd& energies, double beta) {
  if (!std::isfinite(beta)) throw InvalidArgument("thermal_energy: non-finite beta");
  const double ref = boltzmann_reference(energies, beta);
  double z = 0.0, e = 0.0;
  for (double ek : energies) {
    const double w = std::exp(-beta * (ek - ref));
    z += w;
    e += w * (ek - ref);
  }
  return ref + e / z;
}

namespace detail {
// Normalized Gibbs weight per block entry.
inline std::vector<Eigen::VectorXd> gibbs_weights(const Spectrum& s, double beta) {
  if (!std::isfinite(beta)) throw InvalidArgument("Gibbs state needs a finite beta");
  const double ref = boltzmann_reference(s.eigenvalues(), beta);
  double z = 0.0;
  std::vector<Eigen::VectorXd> w;
  for (const auto& blk : s.blocks()) {
    w.push_back((-beta * (blk.values.array() - ref)).exp().matrix());
    z += w.back().sum();
  }
  for (auto& v : w) v /= z;
  return w;
}
} // namespace detail

/// rho(beta) = e^{-beta H} / Tr e^{-beta H} on the full register.
inline DensityMatrix gibbs_state(const Spectrum& s, double beta) {
  if (!s.has_vectors()) throw InvalidArgument("gibbs_state needs eigenvectors");
  const auto w = detail::gibbs_weights(s, beta);
  const auto dim = Eigen::Index(s.dimension());
  DensityMatrix out;
  out.matrix = Eigen::MatrixXcd::Zero(dim, dim);
  for (int q = 1; q <= s.n_qubits(); ++q) out.qubits.push_back(Qubit::system(q));
  for (std::size_t b = 0; b < s.blocks().size(); ++b)
    for (Eigen::Index j = 0; j < s.blocks()[b].size(); ++j) {
      const Vector v = s.block_vector(b, j);
      out.matrix.noalias() += w[b](j) * v * v.adjoint();
    }
  return out;
}

/// Reduced Gibbs state on a subset of system qubits.
inline DensityMatrix thermal_rdm(const Spectrum& s, double beta, std::span<const Qubit> subset) {
  if (!s.has_vectors()) throw InvalidArgument("thermal_rdm needs eigenvectors");
  for (Qubit q : subset)
    if (q.is_ancilla()) throw InvalidArgument("thermal_rdm: the thermal state is defined on the system register only");
  const RegisterLayout layout(s.n_qubits(), false);
  detail::RdmPlan plan(layout, subset);
  const auto w = detail::gibbs_weights(s, beta);
  DensityMatrix out;
  out.qubits = plan.qubits();
  out.matrix = Eigen::MatrixXcd::Zero(plan.kept_dimension(), plan.kept_dimension());
  for (std::size_t b = 0; b < s.blocks().size(); ++b)
    for (Eigen::Index j = 0; j < s.blocks()[b].size(); ++j) {
      if (w[b](j) == 0.0) continue;
      const Vector v = s.block_vector(b, j);
      plan.accumulate(v.data(), w[b](j), out.matrix);
    }
  return out;
}
inline DensityMatrix thermal_rdm(const Spectrum& s, double beta, std::initializer_list<Qubit> subset) {
  return thermal_rdm(s, beta, std::span<const Qubit>(subset.begin(), subset.size()));
}

/// Tr[rho(beta) O].
inline double thermal_expectation(const Spectrum& s, double beta, const HermitianOperator& o) {
  if (o.dimension() != s.dimension())
    throw InvalidArgument("thermal_expectation: operator dimension " + std::to_string(o.dimension()) +
                          " does not match spectrum dimension " + std::to_string(s.dimension()));
  if (!s.has_vectors()) throw InvalidArgument("thermal_expectation needs eigenvectors");
  const auto w = detail::gibbs_weights(s, beta);
  double acc = 0.0;
  for (std::size_t b = 0; b < s.blocks().size(); ++b)
    for (Eigen::Index j = 0; j < s.blocks()[b].size(); ++j) {
      if (w[b](j) == 0.0) continue;
      acc += w[b](j) * expectation(o, s.block_vector(b, j));
    }
  return acc;
}

// ---------------------------------------------------------------------------
// Density of states

struct DosHistogram {
  std::vector<double> edges;  // bins + 1 edges over [0, 1]
  std::vector<std::size_t> counts;

  std::size_t total() const {
    std::size_t t = 0;
    for (auto c : counts) t += c;
    return t;
  }
  double center(std::size_t bin) const { return 0.5 * (edges[bin] + edges[bin + 1]); }
  std::size_t argmax_bin() const {
    return std::size_t(std::max_element(counts.begin(), counts.end()) - counts.begin());
  }
  double argmax_center() const { return center(argmax_bin()); }
};

/// Histogram of energy densities (E_k - E_min)/(E_max - E_min).
inline DosHistogram density_of_states(const Eigen::VectorXd& eigenvalues, std::size_t bins = 100) {
  if (eigenvalues.size() == 0) throw InvalidArgument("density_of_states: empty spectrum");
  if (bins < 2) throw InvalidArgument("density_of_states: need at least two bins");
  DosHistogram h;
  h.counts.assign(bins, 0);
  for (std::size_t b = 0; b <= bins; ++b) h.edges.push_back(double(b) / double(bins));
  const double lo = eigenvalues.minCoeff(), hi = eigenvalues.maxCoeff();
  const double width = hi - lo;
  for (double e : eigenvalues) {
    const double eps = width > 0.0 ? (e - lo) / width : 0.0;
    const auto bin = std::min(bins - 1, std::size_t(std::max(0.0, std::floor(eps * double(bins)))));
    ++h.counts[bin];
  }
  return h;
}
inline DosHistogram density_of_states(const Spectrum& s, std::size_t bins = 100) {
  return density_of_states(s.eigenvalues(), bins);
}

// ---------------------------------------------------------------------------
// Cache files

namespace detail {
inline constexpr char kSpectrumMagic[8] = {'T', 'M', 'I', 'S', 'P', 'E', 'C', '\n'};
inline constexpr std::uint32_t kSpectrumVersion = 1;

template <class T> void put(std::ostream& o, const T& v) { o.write(reinterpret_cast<const char*>(&v), sizeof(T)); }
template <class T> T get(std::istream& i) {
  T v{};
  i.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!i) throw IoError("spectrum cache: truncated file");
  return v;
}
template <class T> void put_array(std::ostream& o, const T* p, std::size_t n) {
  o.write(reinterpret_cast<const char*>(p), std::streamsize(n * sizeof(T)));
}
template <class T> void get_array(std::istream& i, T* p, std::size_t n) {
  i.read(reinterpret_cast<char*>(p), std::streamsize(n * sizeof(T)));
  if (!i) throw IoError("spectrum cache: truncated file");
}
} // namespace detail

/// Binary layout (little-endian host order):
///   magic[8] version:u32 n_qubits:u32 fingerprint_len:u32 fingerprint
///   has_vectors:u8 has_gauge:u8 [gauge:c128 x 2^n]
///   n_sym:u32 sym:i32 x n_sym  n_blocks:u32
///   per block: characters:i32 x n_sym  is_real:u8 size:u64 values:f64 x size
///              [vectors: f64 or c128 x size^2, column-major]
inline void Spectrum::save(const std::string& path) const {
  using namespace detail;
  const std::string tmp = path + ".tmp";
  {
    std::ofstream o(tmp, std::ios::binary | std::ios::trunc);
    if (!o) throw IoError("cannot write spectrum cache " + tmp);
    o.write(kSpectrumMagic, sizeof kSpectrumMagic);
    put(o, kSpectrumVersion);
    put(o, std::uint32_t(n_qubits_));
    put(o, std::uint32_t(fingerprint_.size()));
    o.write(fingerprint_.data(), std::streamsize(fingerprint_.size()));
    put(o, std::uint8_t(has_vectors_));
    put(o, std::uint8_t(has_gauge()));
    if (has_gauge()) put_array(o, gauge_.data(), std::size_t(gauge_.size()));
    put(o, std::uint32_t(symmetries_.size()));
    for (auto p : symmetries_) put(o, std::int32_t(p));
    put(o, std::uint32_t(blocks_.size()));
    for (const auto& blk : blocks_) {
      for (int c : blk.basis->characters) put(o, std::int32_t(c));
      put(o, std::uint8_t(blk.is_real));
      put(o, std::uint64_t(blk.size()));
      put_array(o, blk.values.data(), std::size_t(blk.size()));
      if (has_vectors_) {
        if (blk.is_real) put_array(o, blk.real_vectors.data(), std::size_t(blk.real_vectors.size()));
        else put_array(o, blk.complex_vectors.data(), std::size_t(blk.complex_vectors.size()));
      }
    }
    if (!o) throw IoError("failed writing spectrum cache " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline Spectrum Spectrum::load(const std::string& path) {
  using namespace detail;
  std::ifstream i(path, std::ios::binary);
  if (!i) throw IoError("cannot open spectrum cache " + path);
  char magic[8];
  i.read(magic, 8);
  if (!i || !std::equal(magic, magic + 8, kSpectrumMagic)) throw IoError("not a spectrum cache file: " + path);
  if (get<std::uint32_t>(i) != kSpectrumVersion) throw IoError("unsupported spectrum cache version: " + path);
  Spectrum s;
  s.n_qubits_ = int(get<std::uint32_t>(i));
  s.fingerprint_.resize(get<std::uint32_t>(i));
  i.read(s.fingerprint_.data(), std::streamsize(s.fingerprint_.size()));
  s.has_vectors_ = get<std::uint8_t>(i) != 0;
  const bool gauge = get<std::uint8_t>(i) != 0;
  const std::size_t dim = std::size_t{1} << s.n_qubits_;
  if (gauge) {
    s.gauge_.resize(Eigen::Index(dim));
    get_array(i, s.gauge_.data(), dim);
  }
  const auto n_sym = get<std::uint32_t>(i);
  for (std::uint32_t k = 0; k < n_sym; ++k) s.symmetries_.push_back(Permutation(get<std::int32_t>(i)));
  auto sectors = SectorBasis::build_all(s.n_qubits_, s.symmetries_);
  const auto n_blocks = get<std::uint32_t>(i);
  for (std::uint32_t b = 0; b < n_blocks; ++b) {
    std::vector<int> chars;
    for (std::uint32_t k = 0; k < n_sym; ++k) chars.push_back(get<std::int32_t>(i));
    auto it = std::find_if(sectors.begin(), sectors.end(), [&](const auto& sec) { return sec->characters == chars; });
    if (it == sectors.end()) throw IoError("spectrum cache: unknown sector in " + path);
    Block blk;
    blk.basis = *it;
    blk.is_real = get<std::uint8_t>(i) != 0;
    const auto size = Eigen::Index(get<std::uint64_t>(i));
    if (std::size_t(size) != blk.basis->dimension()) throw IoError("spectrum cache: sector size mismatch in " + path);
    blk.values.resize(size);
    get_array(i, blk.values.data(), std::size_t(size));
    if (s.has_vectors_) {
      if (blk.is_real) {
        blk.real_vectors.resize(size, size);
        get_array(i, blk.real_vectors.data(), std::size_t(size * size));
      } else {
        blk.complex_vectors.resize(size, size);
        get_array(i, blk.complex_vectors.data(), std::size_t(size * size));
      }
    }
    s.blocks_.push_back(std::move(blk));
  }
  s.finish();
  return s;
}

/// Directory of cached spectra keyed by Hamiltonian fingerprint. The
/// location defaults to $TMI_CACHE_DIR, then ./.tmi-cache.
class SpectrumCache {
public:
  explicit SpectrumCache(std::string dir = {}) : dir_(dir.empty() ? default_dir() : std::move(dir)) {}

  static std::string default_dir() {
    if (const char* env = std::getenv("TMI_CACHE_DIR"); env && *env) return env;
    return ".tmi-cache";
  }

  const std::string& directory() const { return dir_; }

  /// Cached spectrum for h, computing and storing it when absent. A cached
  /// entry with eigenvectors also satisfies eigenvalue-only requests.
  Spectrum get(const HermitianOperator& h, bool want_vectors, const SpectrumOptions& opt = {}) const {
    const std::string fp = h.fingerprint();
    const std::string with_vec = path_for(fp, true), without_vec = path_for(fp, false);
    for (const auto& p : want_vectors ? std::vector<std::string>{with_vec} : std::vector<std::string>{without_vec, with_vec}) {
      if (!std::filesystem::exists(p)) continue;
      try {
        Spectrum s = Spectrum::load(p);
        if (s.fingerprint() == fp) return s;
      } catch (const IoError&) {
        // unreadable entries are recomputed
      }
    }
    Spectrum s = full_spectrum(h, want_vectors, opt);
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    try {
      s.save(want_vectors ? with_vec : without_vec);
    } catch (const std::exception&) {
      // a read-only cache only costs recomputation
    }
    return s;
  }

  std::string path_for(const std::string& fingerprint, bool vectors) const {
    return (std::filesystem::path(dir_) / (fingerprint.substr(0, 32) + (vectors ? ".vec.spec" : ".val.spec"))).string();
  }

private:
  std::string dir_;
};

} // namespace tmi
