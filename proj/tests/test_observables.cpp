#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "tmi/observables.hpp"
#include "tmi/state_prep.hpp"

namespace tmi {
namespace {

constexpr double pi = std::numbers::pi;

std::vector<int> bits_of(const RegisterLayout& l, const std::vector<Qubit>& q) {
  std::vector<int> b;
  for (Qubit x : q) b.push_back(l.bit_of(x));
  std::sort(b.begin(), b.end());
  return b;
}

double min_eigenvalue(const Eigen::MatrixXcd& m) {
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>(m, Eigen::EigenvaluesOnly).eigenvalues()(0);
}

TEST(PartialTrace, ProductStateSingleQubit) {
  const BlochDirection d(0.3 * pi, 1.2 * pi);
  const auto psi = product_initial_state({StateFamily::isotropic, d, false}, 5);
  const Ket k = bloch_eigenstate(d, Sign::plus);
  for (int q = 1; q <= 5; ++q)
    EXPECT_LE((partial_trace(psi, {Qubit::system(q)}).matrix - k * k.adjoint()).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(PartialTrace, GhzMarginal) {
  Vector ghz = Vector::Zero(4);
  ghz(0) = ghz(3) = 1.0 / std::sqrt(2.0);
  const PureState psi(RegisterLayout(2, false), ghz);
  EXPECT_LE((partial_trace(psi, {Qubit::system(2)}).matrix - 0.5 * Eigen::Matrix2cd::Identity()).norm(), 1e-15);
}

TEST(PartialTrace, RandomStateMatchesDenseOracle) {
  std::mt19937 rng(1);
  const RegisterLayout l(8, false);
  const PureState psi(l, oracle::random_state(256, rng));
  const Eigen::MatrixXcd rho = psi.amplitudes * psi.amplitudes.adjoint();
  const auto keep = qubits({2, 5, 7});
  const auto r = partial_trace(psi, keep);
  EXPECT_LE((r.matrix - oracle::dense_partial_trace(rho, 8, {1, 4, 6})).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(r.trace(), 1.0, 1e-12);
  EXPECT_GE(min_eigenvalue(r.matrix), -1e-10);
  EXPECT_EQ(r.qubits, keep);
  // unsorted input gives the same ascending basis
  const auto r2 = partial_trace(psi, qubits({7, 2, 5}));
  EXPECT_EQ((r.matrix - r2.matrix).norm(), 0.0);
}

TEST(PartialTrace, WithAncilla) {
  std::mt19937 rng(2);
  const RegisterLayout l(5, true);
  const PureState psi(l, oracle::random_state(64, rng));
  const Eigen::MatrixXcd rho = psi.amplitudes * psi.amplitudes.adjoint();
  const std::vector<Qubit> keep{Qubit::ancilla(), Qubit::system(1), Qubit::system(3)};
  EXPECT_LE((partial_trace(psi, keep).matrix - oracle::dense_partial_trace(rho, 6, bits_of(l, keep))).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(PartialTrace, OfDensityMatrixComposes) {
  std::mt19937 rng(3);
  const RegisterLayout l(6, false);
  const PureState psi(l, oracle::random_state(64, rng));
  const auto mid = partial_trace(psi, qubits({1, 3, 4, 6}));
  const auto inner = partial_trace(mid, std::vector<Qubit>(qubits({3, 6})));
  EXPECT_LE((inner.matrix - partial_trace(psi, qubits({3, 6})).matrix).cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_THROW(partial_trace(mid, std::vector<Qubit>(qubits({2}))), InvalidArgument);
}

TEST(PartialTrace, Errors) {
  const PureState psi(RegisterLayout(3, false), Vector::Unit(8, 0));
  EXPECT_THROW(partial_trace(psi, qubits({4})), InvalidArgument);
  EXPECT_THROW(partial_trace(psi, qubits({1, 1})), InvalidArgument);
  EXPECT_THROW(partial_trace(psi, std::vector<Qubit>{}), InvalidArgument);
  EXPECT_THROW(partial_trace(psi, {Qubit::ancilla()}), InvalidArgument);
}

TEST(Entropy, SimpleValues) {
  DensityMatrix pure{Eigen::MatrixXcd::Zero(2, 2), qubits({1})};
  pure.matrix(0, 0) = 1.0;
  EXPECT_EQ(von_neumann_entropy(pure), 0.0);
  DensityMatrix mixed2{Eigen::MatrixXcd::Identity(2, 2) / 2.0, qubits({1})};
  EXPECT_NEAR(von_neumann_entropy(mixed2), 1.0, 1e-15);
  DensityMatrix mixed8{Eigen::MatrixXcd::Identity(8, 8) / 8.0, qubits({1, 2, 3})};
  EXPECT_NEAR(von_neumann_entropy(mixed8), 3.0, 1e-14);
  EXPECT_NEAR(von_neumann_entropy(mixed8, LogBase::nats), 3.0 * std::log(2.0), 1e-14);
  DensityMatrix bad{Eigen::MatrixXcd::Identity(2, 2), qubits({1})};
  EXPECT_THROW(von_neumann_entropy(bad), InvalidArgument);
}

TEST(Entropy, SubadditivityAndPurityComplement) {
  std::mt19937 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 4 + trial % 5;
    const PureState psi(RegisterLayout(n, false), oracle::random_state(Eigen::Index(1) << n, rng));
    const auto a = qubits({1}), b = qubits({2, 3});
    auto s = [&](const std::vector<Qubit>& q) { return von_neumann_entropy(partial_trace(psi, q)); };
    std::vector<Qubit> ab = qubits({1, 2, 3});
    EXPECT_LE(s(ab), s(a) + s(b) + 1e-9);
    std::vector<Qubit> rest;
    for (int i = 4; i <= n; ++i) rest.push_back(Qubit::system(i));
    EXPECT_NEAR(s(ab), s(rest), 1e-10);
  }
}

TEST(Tmi, ProtocolInitialStatesVanish) {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 10; ++trial) {
    const BlochDirection d(pi * u(rng), 2 * pi * u(rng));
    for (auto fam : {StateFamily::isotropic, StateFamily::neel}) {
      const auto bp = scrambling_branches({fam, d, true}, 8);
      EXPECT_NEAR(tripartite_mutual_information(bp, SubsystemPartition::protocol(8)), 0.0, 1e-10);
    }
  }
}

TEST(Tmi, ProductStateAnyPartition) {
  const auto psi = product_initial_state({StateFamily::isotropic, {1.0, 2.0}, false}, 6);
  SubsystemPartition p{qubits({1, 4}), qubits({2}), qubits({3, 6}), qubits({5})};
  EXPECT_NEAR(tripartite_mutual_information(psi, p), 0.0, 1e-10);
}

TEST(Tmi, MatchesConventionalFormOracle) {
  std::mt19937 rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 6;
    const PureState psi(RegisterLayout(n, false), oracle::random_state(64, rng));
    const Eigen::MatrixXcd rho = psi.amplitudes * psi.amplitudes.adjoint();
    // A={1}, B={2}, C={3,4}, D={5,6} in bit positions
    auto s = [&](std::vector<int> bits) { return oracle::entropy_bits(oracle::dense_partial_trace(rho, n, bits)); };
    const double conventional = s({0}) + s({1}) + s({2, 3}) - s({0, 1}) - s({0, 2, 3}) - s({1, 2, 3}) + s({0, 1, 2, 3});
    SubsystemPartition p{qubits({1}), qubits({2}), qubits({3, 4}), qubits({5, 6})};
    EXPECT_NEAR(tripartite_mutual_information(psi, p), conventional, 1e-10);
  }
}

TEST(Tmi, InvariantUnderRelabelingWithinBlocks) {
  std::mt19937 rng(7);
  const PureState psi(RegisterLayout(6, true), oracle::random_state(128, rng));
  auto p = SubsystemPartition::protocol(6);
  const double a = tripartite_mutual_information(psi, p);
  std::reverse(p.c.begin(), p.c.end());
  std::reverse(p.d.begin(), p.d.end());
  EXPECT_NEAR(tripartite_mutual_information(psi, p), a, 1e-10);
}

TEST(Tmi, PartitionValidation) {
  EXPECT_THROW(SubsystemPartition::protocol(5), InvalidArgument);
  const auto p = SubsystemPartition::protocol(6);
  EXPECT_EQ(p.c, qubits({2, 3}));
  EXPECT_EQ(p.d, qubits({4, 5, 6}));
  EXPECT_THROW(p.validate(RegisterLayout(6, false)), InvalidArgument);
  SubsystemPartition overlap{qubits({1}), qubits({1}), qubits({2}), qubits({3})};
  EXPECT_THROW(overlap.validate(RegisterLayout(3, false)), InvalidArgument);
  SubsystemPartition gap{qubits({1}), qubits({2}), qubits({3}), qubits({4})};
  EXPECT_THROW(gap.validate(RegisterLayout(5, false)), InvalidArgument);
}

TEST(TimeAverage, ConstantAndRamp) {
  std::vector<double> t, c, r;
  for (int k = 0; k <= 10; ++k) {
    t.push_back(0.1 * k);
    c.push_back(-0.37);
    r.push_back(2.0 + 3.0 * 0.1 * k);
  }
  EXPECT_DOUBLE_EQ(time_average(t, c, {0.0, 1.0}), -0.37);
  EXPECT_NEAR(time_average(t, r, {0.0, 1.0}), 2.0 + 1.5, 1e-14);
  // window edges off the grid
  EXPECT_NEAR(time_average(t, r, {0.25, 0.75}), 2.0 + 3.0 * 0.5, 1e-14);
  EXPECT_THROW(time_average(t, r, {0.0, 2.0}), InvalidArgument);
  EXPECT_THROW(time_average(t, r, {0.5, 0.5}), InvalidArgument);
}

TEST(TimeAverage, QuadratureConvergesOnSine) {
  auto avg = [](double dt) {
    std::vector<double> t, y;
    for (double x = 0.0; x <= 1000.0 + 1e-9; x += dt) {
      t.push_back(x);
      y.push_back(std::sin(x));
    }
    return time_average(t, y, {100.0, 1000.0});
  };
  EXPECT_NEAR(avg(0.5), avg(0.01), 1e-3);
}

TEST(TimeAverage, FromTrajectory) {
  QuenchTrajectory tr;
  tr.times = {0, 1, 2, 3};
  tr.series = {{"I3", {0, -1, -1, -1}}};
  EXPECT_NEAR(time_averaged_tmi(tr, {1, 3}), -1.0, 1e-15);
  EXPECT_THROW(time_averaged_tmi(tr, {1, 3}, "nope"), InvalidArgument);
}

TEST(LocalObservables, DeviationBasics) {
  std::mt19937 rng(8);
  const PureState psi(RegisterLayout(7, false), oracle::random_state(128, rng));
  const auto sub = qubits({5, 6, 7});
  const auto rho = partial_trace(psi, sub);
  DensityMatrix infinite{Eigen::MatrixXcd::Identity(8, 8) / 8.0, sub};
  for (Axis a : {Axis::x, Axis::y, Axis::z}) {
    EXPECT_EQ(local_observable_deviation(rho, rho, a), 0.0);
    // against the beta = 0 reference the deviation is the expectation itself
    const auto o = average_pauli(RegisterLayout(7, false), sub, a);
    EXPECT_NEAR(local_observable_deviation(rho, infinite, a), expectation(o, psi.amplitudes), 1e-12);
  }
  EXPECT_THROW(local_observable_deviation(rho, partial_trace(psi, qubits({1, 2, 3})), Axis::x), InvalidArgument);
}

TEST(LocalObservables, RegisterAverage) {
  const auto psi = product_initial_state({StateFamily::isotropic, BlochDirection::from_pi(0.5, 0.0), false}, 6);
  EXPECT_NEAR(register_average_pauli(psi, Axis::x), 1.0, 1e-14);
  EXPECT_NEAR(register_average_pauli(psi, Axis::z), 0.0, 1e-14);
}

TEST(Distance, SimpleCases) {
  DensityMatrix a{Eigen::MatrixXcd::Zero(2, 2), qubits({1})};
  a.matrix(0, 0) = 1.0;
  DensityMatrix half{Eigen::MatrixXcd::Identity(2, 2) / 2.0, qubits({1})};
  EXPECT_EQ(rdm_distance(a, a), 0.0);
  EXPECT_NEAR(rdm_distance(a, half), 0.5, 1e-15);
  EXPECT_NEAR(rdm_distance(half, a, DistanceKind::operator_norm), 0.5, 1e-15);
  DensityMatrix big{Eigen::MatrixXcd::Identity(4, 4) / 4.0, qubits({1, 2})};
  EXPECT_THROW(rdm_distance(a, big), InvalidArgument);
}

TEST(Distance, MatchesDenseEigensolve) {
  std::mt19937 rng(9);
  const PureState p1(RegisterLayout(6, false), oracle::random_state(64, rng));
  const PureState p2(RegisterLayout(6, false), oracle::random_state(64, rng));
  const auto r1 = partial_trace(p1, qubits({2, 3, 4})), r2 = partial_trace(p2, qubits({2, 3, 4}));
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(r1.matrix - r2.matrix);
  double mx = -1e300, mabs = 0.0;
  for (auto v : es.eigenvalues()) {
    mx = std::max(mx, v.real());
    mabs = std::max(mabs, std::abs(v));
  }
  EXPECT_NEAR(rdm_distance(r1, r2), mx, 1e-12);
  EXPECT_NEAR(rdm_distance(r1, r2, DistanceKind::operator_norm), mabs, 1e-12);
}

TEST(Cusp, SyntheticAbsSine) {
  const double dt = 0.05;
  std::vector<double> t, y;
  for (double x = 0.0; x <= 12.0; x += dt) {
    t.push_back(x);
    y.push_back(std::abs(std::sin(x - 5.0)));
  }
  // the kinks of |sin(t-5)| sit at 5 + k pi; the one at 5 - pi precedes t_relax = 2
  const auto c = detect_first_cusp(t, y);
  ASSERT_TRUE(c.has_value());
  EXPECT_NEAR(*c, 5.0, dt + 1e-12);
  CuspOptions late;
  late.t_relax = 6.0;
  const auto c2 = detect_first_cusp(t, y, late);
  ASSERT_TRUE(c2.has_value());
  EXPECT_NEAR(*c2, 5.0 + pi, dt + 1e-12);
}

TEST(Cusp, MonotoneSignalHasNone) {
  std::vector<double> t, y;
  for (double x = 0.0; x <= 20.0; x += 0.1) {
    t.push_back(x);
    y.push_back(std::exp(-0.3 * x) - 0.01 * x);
  }
  EXPECT_FALSE(detect_first_cusp(t, y).has_value());
}

TEST(Cusp, ShallowWigglesAreIgnored) {
  std::vector<double> t, y;
  for (double x = 0.0; x <= 30.0; x += 0.05) {
    t.push_back(x);
    const double dip = x > 9.0 && x < 11.0 ? 0.3 * std::sin((x - 9.0) * pi / 2.0) : 0.0;
    y.push_back(0.5 + 0.01 * x + 0.03 * std::sin(3.0 * x) - dip);
  }
  const auto c = detect_first_cusp(t, y);
  ASSERT_TRUE(c.has_value());
  EXPECT_NEAR(*c, 10.0, 0.1);
  CuspOptions deep;
  deep.min_depth = 0.5;
  EXPECT_FALSE(detect_first_cusp(t, y, deep).has_value());
}

TEST(Cusp, Validation) {
  const std::vector<double> t{0, 1, 2}, y{0, 1, 2};
  EXPECT_THROW(detect_first_cusp(t, std::vector<double>{0, 1}), InvalidArgument);
  EXPECT_THROW(detect_first_cusp(t, y, {2.0, 4, 0.1}), InvalidArgument);
  EXPECT_THROW(detect_first_cusp(t, y, {2.0, 5, 0.0}), InvalidArgument);
  EXPECT_FALSE(detect_first_cusp(t, y).has_value());
}

TEST(Cusp, Deterministic) {
  std::mt19937 rng(10);
  std::normal_distribution<double> noise(0, 1e-4);
  std::vector<double> t, y;
  for (double x = 0.0; x <= 15.0; x += 0.05) {
    t.push_back(x);
    y.push_back(std::abs(x - 7.0) * 0.2 + noise(rng));
  }
  const auto a = detect_first_cusp(t, y), b = detect_first_cusp(t, y);
  ASSERT_TRUE(a.has_value());
  EXPECT_EQ(*a, *b);
  EXPECT_NEAR(*a, 7.0, 0.05 + 1e-12);
}

} // namespace
} // namespace tmi
