#pragma once

// Small-n self-consistency checks run by `tmiscramble validate`.

#include <random>
#include <string>
#include <vector>

#include "tmi/evolve.hpp"
#include "tmi/observables.hpp"
#include "tmi/spectrum.hpp"
#include "tmi/state_prep.hpp"

namespace tmi {

struct ValidationCheck {
  std::string name;
  bool passed = false;
  double value = 0.0;
  double tolerance = 0.0;
};

/// Cross-checks between independent code paths at n <= 8.
inline std::vector<ValidationCheck> run_validation(std::uint64_t seed) {
  std::vector<ValidationCheck> out;
  auto check = [&](std::string name, double value, double tol) { out.push_back({std::move(name), value <= tol, value, tol}); };
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto random_direction = [&] { return BlochDirection(std::acos(1 - 2 * u(rng)), 2 * std::numbers::pi * u(rng)); };

  check("lapack eigensolver residual", detail::lapack_probe_residual(), 1e-10);

  for (int n : {6, 8}) {
    const auto ising = build_ising({1.0, 1.05, -0.5, n});
    const auto sqa = build_sqa({1.0, 1.0, n});
    for (const auto* h : {&ising, &sqa}) {
      const std::string tag = std::string(h == &ising ? "ising" : "sqa") + " n=" + std::to_string(n);
      const auto blocked = full_spectrum(*h, true);
      const auto plain = full_spectrum(*h, false, {std::size_t{1} << 14, false});
      check(tag + ": sector vs unblocked eigenvalues", (blocked.eigenvalues() - plain.eigenvalues()).cwiseAbs().maxCoeff(), 1e-10);

      const InitialStateSpec spec{StateFamily::isotropic, random_direction(), false};
      const auto psi = product_initial_state(spec, n);
      const double t = 5.0 + 20.0 * u(rng);
      const auto a = krylov_evolve(*h, psi, t), b = spectral_evolve(blocked, psi, t);
      check(tag + ": Krylov vs spectral evolution", (a.amplitudes - b.amplitudes).norm(), 1e-8);
      check(tag + ": norm after evolution", std::abs(a.norm() - 1.0), 1e-10);

      try {
        const double target = expectation(*h, psi.amplitudes);
        const double beta = inverse_temperature(target, blocked.eigenvalues());
        check(tag + ": thermal energy round trip", std::abs(thermal_energy(blocked.eigenvalues(), beta) - target), 1e-8);
      } catch (const NoFiniteBeta&) {
      }

      const InitialStateSpec prot{StateFamily::isotropic, random_direction(), true};
      const auto part = SubsystemPartition::protocol(n);
      const auto branches = scrambling_branches(prot, n);
      check(tag + ": TMI of the initial protocol state", std::abs(tripartite_mutual_information(branches, part)), 1e-10);
      const auto grid = uniform_grid(4.0, 1.0);
      const auto obs = std::vector<Observer>{{"I3", [&](double, const EvolvingState& s) {
                                                return tripartite_mutual_information(full_state(s), part);
                                              }}};
      const auto tb = evolve_trajectory(*h, branches, grid, obs);
      const auto tf = evolve_trajectory(h->with_idle_high_qubits(1), scrambling_initial_state(prot, RegisterLayout(n, true)), grid, obs);
      double diff = 0.0;
      for (std::size_t k = 0; k < grid.size(); ++k) diff = std::max(diff, std::abs(tb.at("I3")[k] - tf.at("I3")[k]));
      check(tag + ": branch vs full-register TMI", diff, 1e-8);
    }
  }
  return out;
}

} // namespace tmi
