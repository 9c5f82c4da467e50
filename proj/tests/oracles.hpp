#pragma once

// Independent dense reference implementations used only by the tests. None
// of these call into the sparse, sector-blocked or Krylov code paths.

#include <Eigen/Dense>

#include <complex>
#include <random>
#include <vector>

#include "tmi/hilbert.hpp"

namespace tmi::oracle {

using Mat = Eigen::MatrixXcd;

inline Mat pauli(char axis) {
  Mat m(2, 2);
  const std::complex<double> i(0, 1);
  switch (axis) {
  case 'x': m << 0, 1, 1, 0; break;
  case 'y': m << 0, -i, i, 0; break;
  case 'z': m << 1, 0, 0, -1; break;
  default: m = Mat::Identity(2, 2);
  }
  return m;
}

inline Mat kron(const Mat& a, const Mat& b) {
  Mat out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

/// Dense operator with `ops[q]` on qubit q+1 (bit q). Written as the textbook
/// Kronecker product Q_n (x) ... (x) Q_1, so the highest qubit is the most
/// significant factor.
inline Mat kron_chain(const std::vector<char>& ops) {
  Mat out = Mat::Identity(1, 1);
  for (auto it = ops.rbegin(); it != ops.rend(); ++it) out = kron(out, pauli(*it));
  return out;
}

inline Mat dense_ising(int n, double J, double g, double h) {
  const auto dim = Eigen::Index(1) << n;
  Mat H = Mat::Zero(dim, dim);
  for (int i = 0; i + 1 < n; ++i) {
    std::vector<char> ops(std::size_t(n), 'I');
    ops[std::size_t(i)] = ops[std::size_t(i + 1)] = 'z';
    H -= J * kron_chain(ops);
  }
  for (int i = 0; i < n; ++i) {
    std::vector<char> ops(std::size_t(n), 'I');
    ops[std::size_t(i)] = 'x';
    H += g * kron_chain(ops);
    ops[std::size_t(i)] = 'z';
    H += h * kron_chain(ops);
  }
  return H;
}

inline Mat dense_sqa(int n, double lambda, double omega) {
  const auto dim = Eigen::Index(1) << n;
  Mat H = Mat::Zero(dim, dim);
  for (int i = 0; i + 1 < n; ++i)
    for (char a : {'x', 'y'}) {
      std::vector<char> ops(std::size_t(n), 'I');
      ops[std::size_t(i)] = ops[std::size_t(i + 1)] = a;
      H += lambda * kron_chain(ops);
    }
  for (int i = 0; i < n; ++i) {
    std::vector<char> ops(std::size_t(n), 'I');
    ops[std::size_t(i)] = 'y';
    H += omega * kron_chain(ops);
  }
  return H;
}

inline Mat random_hermitian(int dim, std::mt19937& rng) {
  std::normal_distribution<double> d;
  Mat a(dim, dim);
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = {d(rng), d(rng)};
  return 0.5 * (a + a.adjoint());
}

inline Eigen::VectorXcd random_state(Eigen::Index dim, std::mt19937& rng) {
  std::normal_distribution<double> d;
  Eigen::VectorXcd v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) v(i) = {d(rng), d(rng)};
  return v / v.norm();
}

/// Partial trace of a dense density matrix over all bits not in `keep_bits`
/// (ascending), by explicit index loops.
inline Mat dense_partial_trace(const Mat& rho, int n, const std::vector<int>& keep_bits) {
  const int k = int(keep_bits.size());
  Mat out = Mat::Zero(Eigen::Index(1) << k, Eigen::Index(1) << k);
  auto kept_index = [&](Eigen::Index s) {
    Eigen::Index r = 0;
    for (int j = 0; j < k; ++j) r |= ((s >> keep_bits[std::size_t(j)]) & 1) << j;
    return r;
  };
  Eigen::Index keep_mask = 0;
  for (int b : keep_bits) keep_mask |= Eigen::Index(1) << b;
  const Eigen::Index dim = Eigen::Index(1) << n;
  for (Eigen::Index s = 0; s < dim; ++s)
    for (Eigen::Index t = 0; t < dim; ++t)
      if ((s & ~keep_mask) == (t & ~keep_mask)) out(kept_index(s), kept_index(t)) += rho(s, t);
  return out;
}

/// Entropy in bits from a dense matrix.
inline double entropy_bits(const Mat& rho) {
  Eigen::SelfAdjointEigenSolver<Mat> es(rho);
  double s = 0;
  for (double p : es.eigenvalues())
    if (p > 1e-14) s -= p * std::log2(p);
  return s;
}

/// exp(-i H t) v by scaling and squaring a truncated Taylor series.
inline Eigen::VectorXcd taylor_evolve(const Mat& H, const Eigen::VectorXcd& v, double t, int terms = 20) {
  const double norm = H.cwiseAbs().rowwise().sum().maxCoeff() * std::abs(t);
  int squarings = 0;
  while (norm / double(1 << squarings) > 0.5) ++squarings;
  const double dt = t / double(1 << squarings);
  Mat step = Mat::Identity(H.rows(), H.cols());
  Mat term = step;
  for (int k = 1; k <= terms; ++k) {
    term = term * (std::complex<double>(0, -dt) * H) / double(k);
    step += term;
  }
  for (int s = 0; s < squarings; ++s) step = step * step;
  return step * v;
}

/// e^{-beta H}/Z by a scaled Taylor series of the matrix exponential.
inline Mat taylor_gibbs(const Mat& H, double beta, int terms = 30) {
  const double norm = H.cwiseAbs().rowwise().sum().maxCoeff() * std::abs(beta);
  int squarings = 0;
  while (norm / double(1 << squarings) > 0.5) ++squarings;
  const Mat a = (-beta / double(1 << squarings)) * H;
  Mat step = Mat::Identity(H.rows(), H.cols()), term = step;
  for (int k = 1; k <= terms; ++k) {
    term = term * a / double(k);
    step += term;
  }
  for (int s = 0; s < squarings; ++s) step = step * step;
  return step / step.trace();
}

} // namespace tmi::oracle
