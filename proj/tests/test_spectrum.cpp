#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "oracles.hpp"
#include "tmi/spectrum.hpp"

namespace tmi {
namespace {

Eigen::VectorXd dense_eigenvalues(const Eigen::MatrixXcd& m) {
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>(m, Eigen::EigenvaluesOnly).eigenvalues();
}

// max |H - V E V^dagger|
double reconstruction_error(const Spectrum& s, const Eigen::MatrixXcd& h) {
  Eigen::MatrixXcd r = Eigen::MatrixXcd::Zero(h.rows(), h.cols());
  s.for_each_eigenvector([&](double e, const Vector& v) { r.noalias() += e * v * v.adjoint(); });
  return (r - h).cwiseAbs().maxCoeff();
}

TEST(FullSpectrum, SinglePauliX) {
  const auto s = full_spectrum(pauli_term(RegisterLayout(1, false), {{Qubit::system(1), Axis::x}}), true);
  ASSERT_EQ(s.dimension(), 2u);
  EXPECT_NEAR(s.eigenvalues()(0), -1.0, 1e-15);
  EXPECT_NEAR(s.eigenvalues()(1), 1.0, 1e-15);
}

TEST(FullSpectrum, IsingTwoSitesAgainstDense) {
  const auto s = full_spectrum(build_ising({1.0, 1.05, -0.5, 2}), true);
  const auto ev = dense_eigenvalues(oracle::dense_ising(2, 1.0, 1.05, -0.5));
  EXPECT_LE((s.eigenvalues() - ev).cwiseAbs().maxCoeff(), 1e-12);
}

struct Case {
  const char* name;
  HermitianOperator h;
  Eigen::MatrixXcd dense;
};

std::vector<Case> model_cases() {
  std::vector<Case> out;
  for (int n : {3, 4, 5, 6, 7}) {
    out.push_back({"ising", build_ising({1.0, 1.05, -0.5, n}), oracle::dense_ising(n, 1.0, 1.05, -0.5)});
    out.push_back({"sqa", build_sqa({1.0, 1.0, n}), oracle::dense_sqa(n, 1.0, 1.0)});
    out.push_back({"xy", build_xy(0.8, n), oracle::dense_sqa(n, 0.8, 0.0)});
  }
  return out;
}

TEST(FullSpectrum, SectorSolveMatchesDenseOracle) {
  for (const auto& c : model_cases()) {
    for (bool sym : {true, false}) {
      const auto s = full_spectrum(c.h, true, {std::size_t{1} << 14, sym});
      const auto ev = dense_eigenvalues(c.dense);
      const double scale = ev.cwiseAbs().maxCoeff();
      EXPECT_LE((s.eigenvalues() - ev).cwiseAbs().maxCoeff(), 1e-12 * std::max(1.0, scale)) << c.name << c.h.n_qubits();
      EXPECT_LE(reconstruction_error(s, c.dense), 1e-8 * scale) << c.name << c.h.n_qubits();
      for (std::size_t k = 0; k < s.dimension(); k += 3) {
        const Vector v = s.eigenvector(k);
        EXPECT_NEAR(v.norm(), 1.0, 1e-12);
        EXPECT_LE((c.dense * v - s.eigenvalues()(Eigen::Index(k)) * v).norm(), 1e-8 * scale);
      }
    }
  }
}

TEST(FullSpectrum, DetectsExpectedSymmetries) {
  const auto ising = full_spectrum(build_ising({1.0, 1.05, -0.5, 6}), false);
  EXPECT_EQ(ising.symmetries(), std::vector<Permutation>{Permutation::reflection});
  EXPECT_FALSE(ising.has_gauge());
  const auto sqa = full_spectrum(build_sqa({1.0, 1.0, 6}), false);
  EXPECT_TRUE(sqa.has_gauge());
  EXPECT_EQ(sqa.symmetries().size(), 2u);
  EXPECT_EQ(sqa.blocks().size(), 4u);
  // a random Hermitian matrix has neither
  std::mt19937 rng(1);
  const auto generic = full_spectrum(HermitianOperator::from_dense(oracle::random_hermitian(16, rng)), false);
  EXPECT_TRUE(generic.symmetries().empty());
  EXPECT_FALSE(generic.has_gauge());
  EXPECT_FALSE(generic.blocks().front().is_real);
}

TEST(FullSpectrum, SectorBasesAreOrthonormalAndComplete) {
  for (int n : {3, 4, 5}) {
    const auto secs = SectorBasis::build_all(n, {Permutation::reflection, Permutation::global_flip});
    const auto dim = Eigen::Index(1) << n;
    Eigen::MatrixXd all(dim, 0);
    for (const auto& sec : secs) {
      const auto d = Eigen::Index(sec->dimension());
      Eigen::MatrixXd b = Eigen::MatrixXd::Zero(dim, d);
      for (Eigen::Index j = 0; j < d; ++j) {
        auto st = sec->members(std::size_t(j));
        auto co = sec->member_coefs(std::size_t(j));
        for (std::size_t k = 0; k < st.size(); ++k) b(st[k], j) = co[k];
      }
      Eigen::MatrixXd next(dim, all.cols() + d);
      next << all, b;
      all = next;
    }
    ASSERT_EQ(all.cols(), dim);
    EXPECT_LE((all.transpose() * all - Eigen::MatrixXd::Identity(dim, dim)).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(FullSpectrum, EigenbasisRoundTrip) {
  std::mt19937 rng(2);
  for (const auto& c : model_cases()) {
    const auto s = full_spectrum(c.h, true);
    const Vector v = oracle::random_state(Eigen::Index(s.dimension()), rng);
    EXPECT_LE((s.from_eigenbasis(s.to_eigenbasis(v)) - v).norm(), 1e-12);
  }
}

TEST(FullSpectrum, DenseLimit) {
  try {
    full_spectrum(build_ising({1.0, 1.05, -0.5, 6}), false, {32, true});
    FAIL();
  } catch (const ResourceError& e) {
    EXPECT_NE(std::string(e.what()).find("64"), std::string::npos);
  }
}

TEST(FullSpectrum, EigenvaluesOnlyAgree) {
  const auto h = build_sqa({1.0, 1.0, 8});
  const auto a = full_spectrum(h, true), b = full_spectrum(h, false);
  EXPECT_LE((a.eigenvalues() - b.eigenvalues()).cwiseAbs().maxCoeff(), 1e-11);
  EXPECT_FALSE(b.has_vectors());
  EXPECT_THROW(b.eigenvector(0), InvalidArgument);
}

TEST(DensityOfStates, CountsAndBruteForceBinning) {
  const auto s = full_spectrum(build_ising({1.0, 1.05, -0.5, 4}), false);
  const auto hist = density_of_states(s, 10);
  EXPECT_EQ(hist.total(), 16u);
  std::vector<std::size_t> brute(10, 0);
  const double lo = s.e_min(), hi = s.e_max();
  for (double e : s.eigenvalues()) {
    int bin = int((e - lo) / (hi - lo) * 10);
    if (bin == 10) bin = 9;
    ++brute[std::size_t(bin)];
  }
  EXPECT_EQ(hist.counts, brute);
  EXPECT_NEAR(hist.center(0), 0.05, 1e-15);
  EXPECT_THROW(density_of_states(s, 1), InvalidArgument);
  EXPECT_THROW(density_of_states(Eigen::VectorXd()), InvalidArgument);
}

TEST(DensityOfStates, AffineInvariant) {
  const auto h = build_ising({1.0, 1.05, -0.5, 8});
  const auto a = density_of_states(full_spectrum(h, false));
  const auto b = density_of_states(full_spectrum(h.affine(3.0, -2.0), false));
  EXPECT_EQ(a.counts, b.counts);
  EXPECT_EQ(a.total(), 256u);
}

TEST(Gibbs, InfiniteTemperatureIsMaximallyMixed) {
  const auto s = full_spectrum(build_sqa({1.0, 1.0, 5}), true);
  const auto rho = gibbs_state(s, 0.0);
  EXPECT_LE((rho.matrix - Eigen::MatrixXcd::Identity(32, 32) / 32.0).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_THROW(gibbs_state(s, std::numeric_limits<double>::infinity()), InvalidArgument);
}

TEST(Gibbs, MatchesTaylorOracle) {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 3; ++trial) {
    const auto dense = oracle::random_hermitian(16, rng);
    const auto s = full_spectrum(HermitianOperator::from_dense(dense), true);
    for (double beta : {-0.8, 0.3, 1.5}) {
      const auto rho = gibbs_state(s, beta);
      EXPECT_LE((rho.matrix - oracle::taylor_gibbs(dense, beta)).cwiseAbs().maxCoeff(), 1e-10);
      EXPECT_NEAR(rho.trace(), 1.0, 1e-12);
    }
  }
  const auto h = build_ising({1.0, 1.05, -0.5, 4});
  const auto s = full_spectrum(h, true);
  EXPECT_LE((gibbs_state(s, 0.7).matrix - oracle::taylor_gibbs(h.to_dense(), 0.7)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Gibbs, CommutesWithHamiltonianAndIsPositive) {
  for (int n : {4, 6, 8}) {
    const auto h = build_sqa({1.0, 1.0, n});
    const auto s = full_spectrum(h, true);
    const auto rho = gibbs_state(s, 0.6);
    const auto d = h.to_dense();
    EXPECT_LE((rho.matrix * d - d * rho.matrix).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_GE(dense_eigenvalues(rho.matrix).minCoeff(), -1e-10);
    EXPECT_LE((rho.matrix - rho.matrix.adjoint()).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Gibbs, LargeBetaIsOverflowSafe) {
  const auto s = full_spectrum(build_ising({1.0, 1.05, -0.5, 6}), true);
  for (double beta : {-500.0, 500.0}) {
    const auto rho = gibbs_state(s, beta);
    EXPECT_TRUE(rho.matrix.allFinite());
    EXPECT_NEAR(rho.trace(), 1.0, 1e-10);
  }
  EXPECT_NEAR(thermal_energy(s.eigenvalues(), 500.0), s.e_min(), 1e-6);
  EXPECT_NEAR(thermal_energy(s.eigenvalues(), -500.0), s.e_max(), 1e-6);
}

TEST(ThermalEnergy, StrictlyDecreasing) {
  const auto s = full_spectrum(build_ising({1.0, 1.05, -0.5, 8}), false);
  double prev = std::numeric_limits<double>::infinity();
  for (double beta = -3.0; beta <= 3.0; beta += 0.05) {
    const double e = thermal_energy(s.eigenvalues(), beta);
    EXPECT_LT(e, prev);
    prev = e;
  }
  EXPECT_NEAR(thermal_energy(s.eigenvalues(), 0.0), s.eigenvalues().mean(), 1e-12);
}

TEST(ThermalRdm, InfiniteTemperatureSubsets) {
  const auto s = full_spectrum(build_ising({1.0, 1.05, -0.5, 6}), true);
  for (auto subset : {qubits({1, 2, 3}), qubits({2, 4, 6}), qubits({5})}) {
    const auto rho = thermal_rdm(s, 0.0, subset);
    const auto d = rho.matrix.rows();
    EXPECT_LE((rho.matrix - Eigen::MatrixXcd::Identity(d, d) / double(d)).cwiseAbs().maxCoeff(), 1e-14);
  }
  EXPECT_THROW(thermal_rdm(s, 0.0, {Qubit::ancilla()}), InvalidArgument);
}

TEST(ThermalRdm, MatchesDenseOracle) {
  const int n = 6;
  for (const auto& [h, dense] : {std::pair{build_ising({1.0, 1.05, -0.5, n}), oracle::dense_ising(n, 1.0, 1.05, -0.5)},
                                 std::pair{build_sqa({1.0, 1.0, n}), oracle::dense_sqa(n, 1.0, 1.0)}}) {
    const auto s = full_spectrum(h, true);
    const auto full = oracle::taylor_gibbs(dense, 0.5);
    const auto rho = thermal_rdm(s, 0.5, {Qubit::system(5), Qubit::system(6)});
    EXPECT_LE((rho.matrix - oracle::dense_partial_trace(full, n, {4, 5})).cwiseAbs().maxCoeff(), 1e-10);
    const auto rho3 = thermal_rdm(s, 0.5, qubits({2, 3, 5}));
    EXPECT_LE((rho3.matrix - oracle::dense_partial_trace(full, n, {1, 2, 4})).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(ThermalRdm, ProtocolSubset) {
  const auto s = full_spectrum(build_sqa({1.0, 1.0, 8}), true);
  const auto rho = thermal_rdm(s, -0.4, qubits({5, 6, 7}));
  EXPECT_EQ(rho.matrix.rows(), 8);
  EXPECT_NEAR(rho.trace(), 1.0, 1e-12);
  EXPECT_EQ(rho.qubits, qubits({5, 6, 7}));
}

TEST(ThermalExpectation, InfiniteTemperature) {
  const int n = 5;
  const auto h = build_ising({1.0, 1.05, -0.5, n});
  const auto s = full_spectrum(h, true);
  const RegisterLayout l(n, false);
  for (Axis a : {Axis::x, Axis::y, Axis::z})
    EXPECT_NEAR(thermal_expectation(s, 0.0, pauli_term(l, {{Qubit::system(3), a}})), 0.0, 1e-14);
  EXPECT_NEAR(thermal_expectation(s, 0.0, h), s.eigenvalues().mean(), 1e-12);
  EXPECT_THROW(thermal_expectation(s, 0.0, build_ising({1.0, 1.05, -0.5, 4})), InvalidArgument);
}

TEST(ThermalExpectation, MatchesEigenbasisSum) {
  const int n = 6;
  const auto h = build_sqa({1.0, 1.0, n});
  const auto s = full_spectrum(h, true);
  const RegisterLayout l(n, false);
  const auto o = average_pauli(l, qubits({1, 2, 3, 4, 5, 6}), Axis::y);
  // independent oracle: dense eigendecomposition and explicit sum
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(oracle::dense_sqa(n, 1.0, 1.0));
  const auto od = o.to_dense();
  double z = 0.0, acc = 0.0;
  for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k) {
    const double w = std::exp(-0.7 * (es.eigenvalues()(k) - es.eigenvalues()(0)));
    z += w;
    acc += w * (es.eigenvectors().col(k).adjoint() * od * es.eigenvectors().col(k))(0, 0).real();
  }
  EXPECT_NEAR(thermal_expectation(s, 0.7, o), acc / z, 1e-10);
  EXPECT_NEAR(thermal_expectation(s, 0.7, h), thermal_energy(s.eigenvalues(), 0.7), 1e-10);
}

class CacheTest : public ::testing::Test {
protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() / ("tmi-cache-test-" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }
  std::filesystem::path dir_;
};

TEST_F(CacheTest, RoundTripPreservesEverything) {
  for (const auto& h : {build_sqa({1.0, 1.0, 6}), build_ising({1.0, 1.05, -0.5, 6})}) {
    SpectrumCache cache(dir_.string());
    const auto a = cache.get(h, true);
    ASSERT_TRUE(std::filesystem::exists(cache.path_for(h.fingerprint(), true)));
    const auto b = cache.get(h, true);
    EXPECT_EQ(a.fingerprint(), b.fingerprint());
    EXPECT_EQ((a.eigenvalues() - b.eigenvalues()).cwiseAbs().maxCoeff(), 0.0);
    for (std::size_t k = 0; k < a.dimension(); k += 7) EXPECT_EQ((a.eigenvector(k) - b.eigenvector(k)).norm(), 0.0);
    // vector entries also serve eigenvalue-only requests
    const auto c = cache.get(h, false);
    EXPECT_TRUE(c.has_vectors());
  }
}

TEST_F(CacheTest, CorruptEntryIsRecomputed) {
  const auto h = build_ising({1.0, 1.05, -0.5, 5});
  SpectrumCache cache(dir_.string());
  const auto a = cache.get(h, false);
  const auto path = cache.path_for(h.fingerprint(), false);
  std::filesystem::resize_file(path, 20);
  EXPECT_THROW(Spectrum::load(path), IoError);
  const auto b = cache.get(h, false);
  EXPECT_EQ((a.eigenvalues() - b.eigenvalues()).cwiseAbs().maxCoeff(), 0.0);
}

TEST_F(CacheTest, DistinctHamiltoniansDistinctKeys) {
  EXPECT_NE(build_ising({1.0, 1.05, -0.5, 5}).fingerprint(), build_ising({1.0, 1.05, -0.49, 5}).fingerprint());
  EXPECT_EQ(build_sqa({1.0, 1.0, 5}).fingerprint(), build_sqa({1.0, 1.0, 5}).fingerprint());
}

} // namespace
} // namespace tmi
