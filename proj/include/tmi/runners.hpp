#pragma once

// Batch experiments: TMI dynamics, energy-density sweeps, thermalization
// diagnostics, cusp studies and spectrum export.

#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "tmi/evolve.hpp"
#include "tmi/experiment.hpp"
#include "tmi/observables.hpp"
#include "tmi/spectrum.hpp"
#include "tmi/state_prep.hpp"

namespace tmi {

inline std::string log_unit(LogBase b) { return b == LogBase::bits ? "bits (log base 2)" : "nats (log base e)"; }

/// Common header lines of every CSV a run writes.
inline void describe_run(CsvTable& t, const ExperimentSpec& e, const std::string& what) {
  t.comment(what);
  t.comment("model: " + e.model.describe() + ", n = " + std::to_string(e.n) + ", open chain");
  t.comment("tmi-scrambling " + std::string(software_version()) + ", spec " + spec_fingerprint(e).substr(0, 16));
}

/// (<H> - E_min)/(E_max - E_min) of the reduced system state of a branch pair.
inline double protocol_energy_density(const BranchPair& bp, const HermitianOperator& h, SpectrumEdges edges) {
  const double e = 0.5 * (expectation(h, bp.plus) + expectation(h, bp.minus));
  return (e - edges.e_min) / (edges.e_max - edges.e_min);
}

inline Observer tmi_observer(const SubsystemPartition& part, LogBase base) {
  return {"I3", [part, base](double, const EvolvingState& s) {
            if (const auto* bp = std::get_if<BranchPair>(&s)) return tripartite_mutual_information(*bp, part, base);
            return tripartite_mutual_information(std::get<PureState>(s), part, base);
          }};
}

/// Runs `body` and writes the manifest. On failure the run's outputs are
/// removed, a "failed" manifest is written and the error propagates.
template <class F> auto run_with_manifest(RunContext& ctx, F&& body) {
  try {
    if constexpr (std::is_void_v<decltype(body())>) {
      body();
      emit_manifest(ctx, "complete");
    } else {
      auto result = body();
      emit_manifest(ctx, "complete");
      return result;
    }
  } catch (const std::exception& ex) {
    ctx.discard_outputs();
    try {
      emit_manifest(ctx, "failed", ex.what());
    } catch (...) {
    }
    throw;
  }
}

inline std::string gnuplot_script(const std::string& csv, const std::string& x, const std::string& y, int xcol, int ycol,
                                  const std::string& title) {
  std::ostringstream o;
  o << "set datafile separator ','\nset key off\nset title '" << title << "'\nset xlabel '" << x << "'\nset ylabel '" << y
    << "'\nplot '" << csv << "' every ::1 using " << xcol << ":" << ycol << " with lines\n";
  return o.str();
}

// ---------------------------------------------------------------------------
// TMI dynamics

struct DynamicsResult {
  StatePoint state;
  double epsilon = 0.0;
  QuenchTrajectory trajectory;
  std::optional<double> window_average;
};

/// I3(t) for each configured state, evolving the two ancilla branches.
inline std::vector<DynamicsResult> run_tmi_dynamics(RunContext& ctx, const SpectrumCache& cache) {
  const auto& e = ctx.spec();
  e.validate();
  if (e.states.empty()) throw InvalidArgument("tmi-dynamics: no initial states configured");
  const auto h = e.model.hamiltonian(e.n);
  const auto spec = ctx.timed("spectrum", [&] { return cache.get(h, false); });
  const auto edges = edges_of(spec);
  const auto grid = e.time.grid();
  const auto part = SubsystemPartition::protocol(e.n);

  std::vector<DynamicsResult> out(e.states.size());
  ctx.timed("evolution", [&] {
    parallel_for(out.size(), e.workers, [&](std::size_t i) {
      const auto& sp = e.states[i];
      out[i].state = sp;
      out[i].epsilon = energy_density(product_initial_state(sp.spec(false), e.n), h, edges);
      out[i].trajectory = evolve_trajectory(h, scrambling_branches(sp.spec(true), e.n), grid, {tmi_observer(part, e.log_base)});
      if (e.window.t_f <= grid.back() + 1e-9) out[i].window_average = time_averaged_tmi(out[i].trajectory, e.window);
    });
  });

  CsvTable summary({"family", "theta_pi", "phi_pi", "epsilon", "tmi_window_average", "file"});
  describe_run(summary, e, "time-averaged tripartite mutual information per initial state");
  summary.comment("TMI unit: " + log_unit(e.log_base) + "; window [" + format_number(e.window.t_i) + ", " + format_number(e.window.t_f) + "]");
  for (const auto& r : out) {
    const std::string file = "tmi_" + r.state.label() + ".csv";
    CsvTable t({"time", "I3"});
    describe_run(t, e, "tripartite mutual information after the quench");
    t.comment("state: " + to_string(r.state.family) + " theta = " + format_number(r.state.theta_pi) + " pi, phi = " +
              format_number(r.state.phi_pi) + " pi; epsilon = " + format_number(r.epsilon));
    t.comment("partition: A = ancilla, B = Q1, C = Q2..Q" + std::to_string(e.n / 2) + ", D = rest; unit: " + log_unit(e.log_base));
    const auto& i3 = r.trajectory.at("I3");
    for (std::size_t k = 0; k < i3.size(); ++k) t.row({r.trajectory.times[k], i3[k]});
    ctx.write(file, t);
    if (e.plot_scripts)
      ctx.write_text("tmi_" + r.state.label() + ".gp", gnuplot_script(file, "t", "I3", 1, 2, r.state.label()));
    summary.row({to_string(r.state.family), r.state.theta_pi, r.state.phi_pi, r.epsilon,
                 r.window_average ? *r.window_average : std::nan(""), file});
  }
  ctx.write("tmi_summary.csv", summary);
  return out;
}

// ---------------------------------------------------------------------------
// Energy-density sweep

struct SweepRow {
  StatePoint state;
  double epsilon = 0.0;           // product state without the ancilla
  double epsilon_protocol = 0.0;  // reduced system state of the protocol
  std::optional<double> beta;
  std::string beta_status = "ok";
  double tmi_average = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  DosHistogram dos;
  SpectrumEdges edges;
};

/// Sample times used by the sweep: t = 0, then the averaging window.
inline std::vector<double> sweep_grid(const ExperimentSpec& e) {
  std::vector<double> g{0.0};
  const long steps = std::lround((e.window.t_f - e.window.t_i) / e.time.dt_coarse);
  for (long k = 0; k <= steps; ++k) {
    const double t = e.window.t_i + double(k) * e.time.dt_coarse;
    if (t > g.back()) g.push_back(t);
  }
  if (e.window.t_f - g.back() > 1e-9) g.push_back(e.window.t_f);
  return g;
}

inline std::string beta_status(NoFiniteBeta::Edge edge) {
  switch (edge) {
  case NoFiniteBeta::Edge::lower: return "no-finite-beta:lower-edge";
  case NoFiniteBeta::Edge::upper: return "no-finite-beta:upper-edge";
  default: return "no-finite-beta:beyond-cap";
  }
}

/// Energy density, inverse temperature and time-averaged TMI per state, plus
/// the density of states of the model.
inline SweepResult run_epsilon_sweep(RunContext& ctx, const SpectrumCache& cache) {
  const auto& e = ctx.spec();
  e.validate();
  if (e.states.empty()) throw InvalidArgument("epsilon-sweep: no initial states configured");
  const auto h = e.model.hamiltonian(e.n);
  const auto spec = ctx.timed("spectrum", [&] { return cache.get(h, false); });
  SweepResult res;
  res.edges = edges_of(spec);
  res.dos = density_of_states(spec, e.dos_bins);
  const auto grid = sweep_grid(e);
  const auto part = SubsystemPartition::protocol(e.n);

  res.rows.resize(e.states.size());
  ctx.timed("evolution", [&] {
    parallel_for(res.rows.size(), e.workers, [&](std::size_t i) {
      SweepRow& row = res.rows[i];
      row.state = e.states[i];
      const auto product = product_initial_state(row.state.spec(false), e.n);
      const auto branches = scrambling_branches(row.state.spec(true), e.n);
      row.epsilon = energy_density(product, h, res.edges);
      row.epsilon_protocol = protocol_energy_density(branches, h, res.edges);
      try {
        row.beta = inverse_temperature(product, h, spec);
      } catch (const NoFiniteBeta& ex) {
        row.beta_status = beta_status(ex.edge());
      }
      const auto traj = evolve_trajectory(h, branches, grid, {tmi_observer(part, e.log_base)});
      row.tmi_average = time_averaged_tmi(traj, e.window);
    });
  });

  CsvTable t({"family", "theta_pi", "phi_pi", "epsilon", "epsilon_protocol", "beta", "beta_status", "tmi_window_average"});
  describe_run(t, e, "energy density, inverse temperature and time-averaged TMI per initial state");
  t.comment("epsilon = (<H> - E_min)/(E_max - E_min); E_min = " + format_number(res.edges.e_min) + ", E_max = " +
            format_number(res.edges.e_max));
  t.comment("TMI unit: " + log_unit(e.log_base) + "; window [" + format_number(e.window.t_i) + ", " + format_number(e.window.t_f) +
            "], sample spacing " + format_number(e.time.dt_coarse));
  for (const auto& r : res.rows)
    t.row({to_string(r.state.family), r.state.theta_pi, r.state.phi_pi, r.epsilon, r.epsilon_protocol,
           r.beta ? *r.beta : std::nan(""), r.beta_status, r.tmi_average});
  ctx.write("epsilon_sweep.csv", t);

  CsvTable d({"epsilon_lo", "epsilon_hi", "epsilon_center", "count", "density"});
  describe_run(d, e, "density of states over energy density");
  d.comment("density = count / (total * bin width)");
  const double total = double(res.dos.total());
  for (std::size_t b = 0; b < res.dos.counts.size(); ++b) {
    const double width = res.dos.edges[b + 1] - res.dos.edges[b];
    d.row({res.dos.edges[b], res.dos.edges[b + 1], res.dos.center(b), long(res.dos.counts[b]), double(res.dos.counts[b]) / (total * width)});
  }
  ctx.write("dos.csv", d);
  if (e.plot_scripts) {
    ctx.write_text("epsilon_sweep.gp", "set datafile separator ','\nset key off\nset xlabel 'epsilon'\nset ylabel 'time-averaged I3'\n"
                                       "plot 'epsilon_sweep.csv' every ::1 using 4:8 with points pt 7\n");
    ctx.write_text("dos.gp", gnuplot_script("dos.csv", "epsilon", "DoS", 3, 5, "density of states"));
  }
  return res;
}

// ---------------------------------------------------------------------------
// Thermalization diagnostics

struct ThermalizationResult {
  StatePoint state;
  double epsilon = 0.0;
  std::optional<double> beta;
  std::string beta_status = "ok";
  std::array<double, 3> thermal_sigma{};  // subset-averaged <sigma^x,y,z> in the Gibbs state
  QuenchTrajectory trajectory;            // dev_x, dev_y, dev_z, distance
};

/// Compares the subsystem of the evolving product state with the Gibbs state
/// at the matching inverse temperature.
inline std::vector<ThermalizationResult> run_thermalization_diagnostics(RunContext& ctx, const SpectrumCache& cache,
                                                                        DistanceKind kind = DistanceKind::max_eigenvalue) {
  const auto& e = ctx.spec();
  e.validate();
  if (e.states.empty()) throw InvalidArgument("thermalization: no initial states configured");
  e.validate_subset();
  const auto h = e.model.hamiltonian(e.n);
  const auto spec = ctx.timed("spectrum", [&] { return cache.get(h, true); });
  const auto edges = edges_of(spec);
  const auto subset = e.subset_qubits();
  const auto grid = e.time.grid();

  std::vector<ThermalizationResult> out(e.states.size());
  ctx.timed("evolution", [&] {
    parallel_for(out.size(), e.workers, [&](std::size_t i) {
      auto& r = out[i];
      r.state = e.states[i];
      const auto psi = product_initial_state(r.state.spec(false), e.n);
      r.epsilon = energy_density(psi, h, edges);
      try {
        r.beta = inverse_temperature(psi, h, spec);
      } catch (const NoFiniteBeta& ex) {
        r.beta_status = beta_status(ex.edge());
        return;
      }
      const auto rho_th = thermal_rdm(spec, *r.beta, subset);
      for (Axis a : {Axis::x, Axis::y, Axis::z}) r.thermal_sigma[std::size_t(int(a))] = subset_average_pauli(rho_th, a);
      std::vector<Observer> obs;
      for (auto [name, axis] : {std::pair{"dev_x", Axis::x}, {"dev_y", Axis::y}, {"dev_z", Axis::z}})
        obs.push_back({name, [&, axis](double, const EvolvingState& s) {
                         return local_observable_deviation(partial_trace(std::get<PureState>(s), subset), rho_th, axis);
                       }});
      obs.push_back({"distance", [&](double, const EvolvingState& s) {
                       return rdm_distance(partial_trace(std::get<PureState>(s), subset), rho_th, kind);
                     }});
      r.trajectory = evolve_trajectory(h, psi, grid, obs);
    });
  });

  std::string subset_label;
  for (int q : e.subset) subset_label += (subset_label.empty() ? "Q" : ",Q") + std::to_string(q);
  for (const auto& r : out) {
    if (!r.beta) continue;
    CsvTable t({"time", "dev_x", "dev_y", "dev_z", "distance"});
    describe_run(t, e, "subsystem deviation from the Gibbs state at matched energy");
    t.comment("state: " + to_string(r.state.family) + " theta = " + format_number(r.state.theta_pi) + " pi, phi = " +
              format_number(r.state.phi_pi) + " pi; epsilon = " + format_number(r.epsilon) + ", beta = " + format_number(*r.beta));
    t.comment("subset {" + subset_label + "}; dev_a = Tr[(rho(t) - rho_th) O_a], O_a = subset average of sigma^a");
    t.comment(std::string("distance: ") + (kind == DistanceKind::max_eigenvalue ? "largest eigenvalue" : "largest |eigenvalue|") +
              " of rho(t) - rho_th");
    t.comment("thermal <O_x>, <O_y>, <O_z> = " + format_number(r.thermal_sigma[0]) + ", " + format_number(r.thermal_sigma[1]) + ", " +
              format_number(r.thermal_sigma[2]));
    const auto& tr = r.trajectory;
    for (std::size_t k = 0; k < tr.times.size(); ++k)
      t.row({tr.times[k], tr.at("dev_x")[k], tr.at("dev_y")[k], tr.at("dev_z")[k], tr.at("distance")[k]});
    ctx.write("thermalization_" + r.state.label() + ".csv", t);
    if (e.plot_scripts)
      ctx.write_text("thermalization_" + r.state.label() + ".gp",
                     gnuplot_script("thermalization_" + r.state.label() + ".csv", "t", "d", 1, 5, r.state.label()));
  }
  CsvTable s({"family", "theta_pi", "phi_pi", "epsilon", "beta", "beta_status"});
  describe_run(s, e, "thermalization runs");
  for (const auto& r : out)
    s.row({to_string(r.state.family), r.state.theta_pi, r.state.phi_pi, r.epsilon, r.beta ? *r.beta : std::nan(""), r.beta_status});
  ctx.write("thermalization_summary.csv", s);
  return out;
}

// ---------------------------------------------------------------------------
// Cusp study

/// Signal sampled at `times` for system size n.
using CuspSignal = std::function<std::vector<double>(int n, const std::vector<double>& times)>;

/// Register-averaged <sigma^x>(t) after a quench from |X+>^n.
inline CuspSignal quench_sigma_x_signal(const ModelSpec& model) {
  return [model](int n, const std::vector<double>& times) {
    const auto h = model.hamiltonian(n);
    const auto psi = product_initial_state({StateFamily::isotropic, BlochDirection::from_pi(0.5, 0.0), false}, n);
    const auto traj = evolve_trajectory(h, psi, times, {{"sx", [](double, const EvolvingState& s) {
                                                         return register_average_pauli(std::get<PureState>(s), Axis::x);
                                                       }}});
    return traj.at("sx");
  };
}

struct LinearFit {
  double slope = std::nan("");
  double intercept = std::nan("");
  double r_squared = std::nan("");
  std::size_t points = 0;
};

/// Ordinary least squares y = slope x + intercept.
inline LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  LinearFit f;
  f.points = x.size();
  if (x.size() != y.size()) throw InvalidArgument("fit_line: length mismatch");
  if (x.size() < 2) return f;
  const double n = double(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n, my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxx += (x[k] - mx) * (x[k] - mx);
    sxy += (x[k] - mx) * (y[k] - my);
    syy += (y[k] - my) * (y[k] - my);
  }
  if (sxx == 0.0) return f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r_squared = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
  return f;
}

struct CuspRow {
  int n = 0;
  std::optional<double> t_cusp;
  std::vector<double> signal;
};

struct CuspResult {
  std::vector<double> times;
  std::vector<CuspRow> rows;
  LinearFit fit;
};

inline CuspResult run_cusp_study(RunContext& ctx, const CuspSignal& signal) {
  const auto& e = ctx.spec();
  e.validate();
  CuspResult res;
  res.times = uniform_grid(e.cusp.t_end, e.cusp.dt);
  res.rows.resize(e.cusp.n_list.size());
  ctx.timed("evolution", [&] {
    parallel_for(res.rows.size(), e.workers, [&](std::size_t i) {
      auto& r = res.rows[i];
      r.n = e.cusp.n_list[i];
      r.signal = signal(r.n, res.times);
      if (r.signal.size() != res.times.size()) throw InvalidArgument("cusp signal length does not match the time grid");
      r.t_cusp = detect_first_cusp(res.times, r.signal, e.cusp.detector);
    });
  });
  std::vector<double> xs, ys;
  for (const auto& r : res.rows)
    if (r.t_cusp) {
      xs.push_back(r.n);
      ys.push_back(*r.t_cusp);
    }
  res.fit = fit_line(xs, ys);

  const std::string detector = "detector: t_relax = " + format_number(e.cusp.detector.t_relax) + ", smoothing = " +
                               std::to_string(e.cusp.detector.smoothing) + ", min_depth = " + format_number(e.cusp.detector.min_depth);
  CsvTable sig([&] {
    std::vector<std::string> cols{"time"};
    for (const auto& r : res.rows) cols.push_back("sx_n" + std::to_string(r.n));
    return cols;
  }());
  describe_run(sig, e, "register-averaged <sigma^x>(t) after a quench from |X+>");
  sig.comment("model size per column; n in the header line above is unused");
  for (std::size_t k = 0; k < res.times.size(); ++k) {
    std::vector<CsvCell> row{res.times[k]};
    for (const auto& r : res.rows) row.push_back(r.signal[k]);
    sig.row(std::move(row));
  }
  ctx.write("cusp_signals.csv", sig);

  CsvTable t({"n", "t_cusp", "status"});
  describe_run(t, e, "first cusp time per system size");
  t.comment(detector);
  for (const auto& r : res.rows) t.row({long(r.n), r.t_cusp ? *r.t_cusp : std::nan(""), std::string(r.t_cusp ? "ok" : "no-cusp")});
  ctx.write("cusp_times.csv", t);

  CsvTable f({"slope", "intercept", "r_squared", "points"});
  describe_run(f, e, "least-squares fit t_cusp = slope * n + intercept");
  f.row({res.fit.slope, res.fit.intercept, res.fit.r_squared, long(res.fit.points)});
  ctx.write("cusp_fit.csv", f);
  if (e.plot_scripts)
    ctx.write_text("cusp_times.gp", gnuplot_script("cusp_times.csv", "n", "t_cusp", 1, 2, "first cusp"));
  return res;
}

// ---------------------------------------------------------------------------
// Spectrum export

inline Spectrum run_spectrum(RunContext& ctx, const SpectrumCache& cache) {
  const auto& e = ctx.spec();
  e.validate();
  const auto h = e.model.hamiltonian(e.n);
  auto s = ctx.timed("spectrum", [&] { return cache.get(h, false); });
  const auto edges = edges_of(s);
  CsvTable t({"index", "energy", "epsilon"});
  describe_run(t, e, "eigenvalues in ascending order");
  for (Eigen::Index k = 0; k < s.eigenvalues().size(); ++k)
    t.row({long(k), s.eigenvalues()(k), (s.eigenvalues()(k) - edges.e_min) / (edges.e_max - edges.e_min)});
  ctx.write("spectrum.csv", t);
  const auto dos = density_of_states(s, e.dos_bins);
  CsvTable d({"epsilon_lo", "epsilon_hi", "count"});
  describe_run(d, e, "density of states over energy density");
  for (std::size_t b = 0; b < dos.counts.size(); ++b) d.row({dos.edges[b], dos.edges[b + 1], long(dos.counts[b])});
  ctx.write("dos.csv", d);
  ctx.add_note("e_min", s.e_min());
  ctx.add_note("e_max", s.e_max());
  return s;
}

} // namespace tmi
