#include <CLI11.hpp>

#include <unistd.h>

#include <cstdlib>
#include <iostream>
#include <optional>

#include "tmi/runners.hpp"
#include "tmi/validate.hpp"

namespace {

// OpenBLAS kernels tried, in order, when the default one fails the eigensolver check.
const char* const kCoreTypes[] = {"SkylakeX", "Haswell", "Sandybridge", "Nehalem", "Prescott"};

/// Re-executes the program with another OPENBLAS_CORETYPE if the linked
/// LAPACK returns wrong eigenvectors. Returns only when no retry is possible.
void ensure_working_lapack(char** argv) {
  if (tmi::lapack_eigensolver_ok()) return;
  const char* current = std::getenv("OPENBLAS_CORETYPE");
  std::size_t next = 0;
  if (current) {
    while (next < std::size(kCoreTypes) && std::string(kCoreTypes[next]) != current) ++next;
    ++next;
  }
  if (next >= std::size(kCoreTypes)) return;
  setenv("OPENBLAS_CORETYPE", kCoreTypes[next], 1);
  std::cerr << "note: LAPACK self-check failed, retrying with OPENBLAS_CORETYPE=" << kCoreTypes[next] << "\n";
  execv("/proc/self/exe", argv);
}

struct Overrides {
  std::string config;
  std::string model;
  std::optional<int> n;
  std::string out;
  std::optional<int> workers;
  bool full_scale = false;
  std::string log_base;
  std::optional<std::uint64_t> seed;
  std::string cache_dir;
  bool plots = false;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "JSON experiment file")->check(CLI::ExistingFile);
  cmd->add_option("--model", o.model, "ising or sqa")->check(CLI::IsMember({"ising", "sqa"}));
  cmd->add_option("--n", o.n, "number of system qubits");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--workers", o.workers, "concurrent initial states")->check(CLI::PositiveNumber);
  cmd->add_flag("--full-scale", o.full_scale, "n = 14, t up to 1000, window [100, 1000]");
  cmd->add_option("--log-base", o.log_base, "entropy log base")->check(CLI::IsMember({"2", "e"}));
  cmd->add_option("--seed", o.seed, "seed for randomized checks");
  cmd->add_option("--cache-dir", o.cache_dir, "spectrum cache (default $TMI_CACHE_DIR or ./.tmi-cache)");
  cmd->add_flag("--plots", o.plots, "also write gnuplot scripts");
}

std::vector<tmi::StatePoint> default_states(const std::string& command, tmi::ModelKind model) {
  using tmi::StateFamily;
  const bool ising = model == tmi::ModelKind::ising;
  if (command == "epsilon-sweep") {
    tmi::json grid = tmi::json::array();
    const tmi::json range{{"start", 0.0}, {"stop", 0.5}, {"step", 0.05}};
    if (ising) {
      grid.push_back({{"family", "isotropic"}, {"theta_pi", range}, {"phi_pi", range}});
    } else {
      grid.push_back({{"family", "isotropic"}, {"theta_pi", range}, {"phi_pi", {{"start", 0.0}, {"stop", 1.75}, {"step", 0.25}}}});
      grid.push_back({{"family", "neel"}, {"theta_pi", range}, {"phi_pi", 0.0}});
    }
    return tmi::parse_states(grid);
  }
  if (ising) return {{StateFamily::isotropic, 0.5, 0.0}, {StateFamily::isotropic, 0.5, 0.5}, {StateFamily::isotropic, 0.0, 0.0}};
  return {{StateFamily::isotropic, 0.5, 1.369}, {StateFamily::isotropic, 0.5, 0.369}};
}

tmi::ExperimentSpec resolve(const std::string& command, const Overrides& o) {
  tmi::ExperimentSpec e;
  if (!o.model.empty()) e.model.kind = tmi::parse_model(o.model);
  if (o.full_scale) e.apply_full_scale();
  if (!o.config.empty()) tmi::merge_json(e, tmi::load_json_file(o.config));
  if (!o.model.empty()) e.model.kind = tmi::parse_model(o.model);
  if (o.n) e.n = *o.n;
  if (!o.out.empty()) e.out_dir = o.out;
  if (o.workers) e.workers = *o.workers;
  if (!o.log_base.empty()) e.log_base = o.log_base == "2" ? tmi::LogBase::bits : tmi::LogBase::nats;
  if (o.seed) e.seed = *o.seed;
  if (o.plots) e.plot_scripts = true;
  if (e.states.empty() && command != "cusp-study" && command != "spectrum") e.states = default_states(command, e.model.kind);
  e.validate();
  return e;
}

int print_validation(std::uint64_t seed) {
  bool ok = true;
  for (const auto& c : tmi::run_validation(seed)) {
    std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << tmi::format_number(c.value) << " (tol "
              << tmi::format_number(c.tolerance) << ")\n";
    ok = ok && c.passed;
  }
  return ok ? 0 : 1;
}

int print_verify(const std::string& manifest) {
  const auto issues = tmi::verify_manifest(manifest);
  for (const auto& i : issues) std::cout << "MISMATCH " << i.file << ": " << i.problem << "\n";
  if (issues.empty()) std::cout << "ok: every listed output matches its checksum\n";
  return issues.empty() ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
  ensure_working_lapack(argv);

  CLI::App app{"Quench dynamics and scrambling of quantum spin chains"};
  app.set_version_flag("--version", std::string(tmi::software_version()));
  app.require_subcommand(1);

  Overrides o;
  const std::vector<std::pair<std::string, std::string>> runs{
      {"spectrum", "eigenvalues and density of states"},
      {"tmi-dynamics", "tripartite mutual information after a quench"},
      {"epsilon-sweep", "energy density, inverse temperature and averaged TMI over initial states"},
      {"thermalization", "subsystem deviation from the matched Gibbs state"},
      {"cusp-study", "first cusp of the register-averaged sigma^x versus n"}};
  for (const auto& [name, help] : runs) add_common(app.add_subcommand(name, help), o);

  auto* validate = app.add_subcommand("validate", "small-n consistency checks between independent code paths");
  validate->add_option("--seed", o.seed, "seed for randomized states");
  std::string manifest;
  auto* verify = app.add_subcommand("verify", "re-hash the outputs listed in a manifest");
  verify->add_option("manifest", manifest, "path to manifest.json")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (validate->parsed()) return print_validation(o.seed.value_or(12345));
    if (verify->parsed()) return print_verify(manifest);

    const std::string command = app.get_subcommands().front()->get_name();
    const auto spec = resolve(command, o);
    tmi::RunContext ctx(spec, command);
    const tmi::SpectrumCache cache(o.cache_dir);
    tmi::run_with_manifest(ctx, [&] {
      if (command == "spectrum") tmi::run_spectrum(ctx, cache);
      else if (command == "tmi-dynamics") tmi::run_tmi_dynamics(ctx, cache);
      else if (command == "epsilon-sweep") tmi::run_epsilon_sweep(ctx, cache);
      else if (command == "thermalization") tmi::run_thermalization_diagnostics(ctx, cache);
      else tmi::run_cusp_study(ctx, tmi::quench_sigma_x_signal(spec.model));
    });
    std::cout << "wrote " << ctx.outputs().size() << " files and " << tmi::kManifestName << " to " << ctx.directory().string() << "\n";
    return 0;
  } catch (const tmi::InvalidArgument& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 2;
  } catch (const tmi::IoError& ex) {
    std::cerr << "i/o error: " << ex.what() << "\n";
    return 3;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
}
