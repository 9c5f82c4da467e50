#pragma once

// Experiment specification, CSV output, result manifests and the worker
// pool shared by the runners.

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "tmi/checksum.hpp"
#include "tmi/errors.hpp"
#include "tmi/hilbert.hpp"
#include "tmi/observables.hpp"
#include "tmi/state_prep.hpp"

#ifndef TMI_VERSION
#define TMI_VERSION "0.0.0"
#endif

namespace tmi {

using json = nlohmann::json;

inline constexpr const char* software_version() { return TMI_VERSION; }

enum class ModelKind { ising, sqa };

struct ModelSpec {
  ModelKind kind = ModelKind::ising;
  IsingParams ising;  // n ignored; taken from the experiment
  SqaParams sqa;

  HermitianOperator hamiltonian(int n) const {
    if (kind == ModelKind::ising) {
      IsingParams p = ising;
      p.n = n;
      return build_ising(p);
    }
    SqaParams p = sqa;
    p.n = n;
    return build_sqa(p);
  }
  std::string name() const { return kind == ModelKind::ising ? "ising" : "sqa"; }
  std::string describe() const {
    std::ostringstream o;
    o.precision(12);
    if (kind == ModelKind::ising) o << "ising J=" << ising.J << " g=" << ising.g << " h=" << ising.h;
    else o << "sqa lambda=" << sqa.lambda << " omega=" << sqa.omega;
    return o.str();
  }
};

inline ModelKind parse_model(const std::string& s) {
  if (s == "ising") return ModelKind::ising;
  if (s == "sqa") return ModelKind::sqa;
  throw InvalidArgument("unknown model '" + s + "' (expected ising or sqa)");
}

inline StateFamily parse_family(const std::string& s) {
  if (s == "isotropic") return StateFamily::isotropic;
  if (s == "neel") return StateFamily::neel;
  throw InvalidArgument("unknown state family '" + s + "' (expected isotropic or neel)");
}

/// One initial state, angles in units of pi.
struct StatePoint {
  StateFamily family = StateFamily::isotropic;
  double theta_pi = 0.0;
  double phi_pi = 0.0;

  BlochDirection direction() const { return BlochDirection::from_pi(theta_pi, phi_pi); }
  InitialStateSpec spec(bool ancilla) const { return {family, direction(), ancilla}; }

  /// File-name friendly tag, e.g. iso_t0.5_p1.369.
  std::string label() const {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%s_t%.6g_p%.6g", family == StateFamily::isotropic ? "iso" : "neel", theta_pi, phi_pi);
    return buf;
  }
  bool operator==(const StatePoint&) const = default;
};

/// Inclusive arithmetic range start, start+step, ..., stop.
inline std::vector<double> arange_inclusive(double start, double stop, double step) {
  if (!(step > 0.0)) throw InvalidArgument("range step must be positive");
  std::vector<double> v;
  const long count = std::lround(std::floor((stop - start) / step + 1e-9));
  for (long k = 0; k <= count; ++k) v.push_back(std::round((start + double(k) * step) * 1e12) / 1e12);
  return v;
}

struct TimeGridSpec {
  double t_end = 200.0;
  double dt_fine = 0.1;
  double t_switch = 50.0;
  double dt_coarse = 0.5;

  std::vector<double> grid() const { return piecewise_grid(t_end, dt_fine, t_switch, dt_coarse); }
};

struct CuspStudySpec {
  std::vector<int> n_list{8, 10, 12};
  double t_end = 30.0;
  double dt = 0.05;
  CuspOptions detector;
};

struct ExperimentSpec {
  ModelSpec model;
  int n = 10;
  std::vector<StatePoint> states;
  TimeGridSpec time;
  TimeAverageWindow window{50.0, 200.0};
  std::vector<int> subset{5, 6, 7};
  CuspStudySpec cusp;
  std::size_t dos_bins = 100;
  LogBase log_base = LogBase::bits;
  int workers = 1;
  std::uint64_t seed = 12345;
  std::string out_dir = "tmi-out";
  bool full_scale = false;
  bool plot_scripts = false;

  /// Full-scale settings: N = 14, t_f = 1000, window [100, 1000].
  void apply_full_scale() {
    full_scale = true;
    n = 14;
    time = {1000.0, 0.1, 100.0, 0.5};
    window = {100.0, 1000.0};
    cusp.n_list = {8, 10, 12, 14};
  }

  std::vector<Qubit> subset_qubits() const {
    std::vector<Qubit> q;
    for (int i : subset) q.push_back(Qubit::system(i));
    return q;
  }

  void validate_subset() const {
    if (subset.empty()) throw InvalidArgument("subset must not be empty");
    for (int q : subset)
      if (q < 1 || q > n) throw InvalidArgument("subset qubit " + std::to_string(q) + " outside 1.." + std::to_string(n));
  }

  void validate() const {
    if (n < 2) throw InvalidArgument("n must be at least 2");
    if (workers < 1) throw InvalidArgument("workers must be at least 1");
    if (dos_bins < 2) throw InvalidArgument("dos_bins must be at least 2");
    if (!(window.t_i >= 0 && window.t_i < window.t_f)) throw InvalidArgument("averaging window needs 0 <= t_i < t_f");
    if (!(time.dt_fine > 0 && time.dt_coarse > 0 && time.t_end > 0)) throw InvalidArgument("time grid spacings must be positive");
    for (const auto& s : states) {
      if (!std::isfinite(s.theta_pi) || !std::isfinite(s.phi_pi)) throw InvalidArgument("state angles must be finite");
      if (s.theta_pi < 0.0 || s.theta_pi > 1.0) throw InvalidArgument("theta must lie in [0, pi]");
      if (s.phi_pi < 0.0 || s.phi_pi >= 2.0) throw InvalidArgument("phi must lie in [0, 2 pi)");
      if (s.family == StateFamily::neel && n % 2 != 0) throw InvalidArgument("Neel states need an even n");
    }
    for (int m : cusp.n_list)
      if (m < 2) throw InvalidArgument("cusp n_list entries must be at least 2");
  }
};

// ---------------------------------------------------------------------------
// JSON round trip

inline json to_json(const StatePoint& s) {
  return {{"family", to_string(s.family)}, {"theta_pi", s.theta_pi}, {"phi_pi", s.phi_pi}};
}

inline json to_json(const ExperimentSpec& e) {
  json model{{"kind", e.model.name()}};
  if (e.model.kind == ModelKind::ising) {
    model["J"] = e.model.ising.J;
    model["g"] = e.model.ising.g;
    model["h"] = e.model.ising.h;
  } else {
    model["lambda"] = e.model.sqa.lambda;
    model["omega"] = e.model.sqa.omega;
  }
  json states = json::array();
  for (const auto& s : e.states) states.push_back(to_json(s));
  return {{"model", model},
          {"n", e.n},
          {"states", states},
          {"time", {{"t_end", e.time.t_end}, {"dt_fine", e.time.dt_fine}, {"t_switch", e.time.t_switch}, {"dt_coarse", e.time.dt_coarse}}},
          {"window", {{"t_i", e.window.t_i}, {"t_f", e.window.t_f}}},
          {"subset", e.subset},
          {"cusp",
           {{"n_list", e.cusp.n_list},
            {"t_end", e.cusp.t_end},
            {"dt", e.cusp.dt},
            {"t_relax", e.cusp.detector.t_relax},
            {"smoothing", e.cusp.detector.smoothing},
            {"min_depth", e.cusp.detector.min_depth}}},
          {"dos_bins", e.dos_bins},
          {"log_base", e.log_base == LogBase::bits ? "2" : "e"},
          {"workers", e.workers},
          {"seed", e.seed},
          {"out", e.out_dir},
          {"full_scale", e.full_scale},
          {"plot_scripts", e.plot_scripts}};
}

namespace detail {
inline std::vector<double> number_list(const json& j, const char* what) {
  if (j.is_number()) return {j.get<double>()};
  if (j.is_array()) return j.get<std::vector<double>>();
  if (j.is_object()) return arange_inclusive(j.at("start").get<double>(), j.at("stop").get<double>(), j.at("step").get<double>());
  throw InvalidArgument(std::string("config: ") + what + " must be a number, a list or {start, stop, step}");
}
} // namespace detail

/// States listed explicitly or as Cartesian grids:
///   {"family": "isotropic", "theta_pi": {"start":0,"stop":0.5,"step":0.05}, "phi_pi": [0, 0.5]}
inline std::vector<StatePoint> parse_states(const json& arr) {
  std::vector<StatePoint> out;
  for (const auto& item : arr) {
    const auto fam = parse_family(item.value("family", std::string("isotropic")));
    const auto thetas = detail::number_list(item.at("theta_pi"), "theta_pi");
    const auto phis = item.contains("phi_pi") ? detail::number_list(item.at("phi_pi"), "phi_pi") : std::vector<double>{0.0};
    for (double t : thetas)
      for (double p : phis) out.push_back({fam, t, p});
  }
  return out;
}

/// Overlays the keys present in `j` onto `e`.
inline void merge_json(ExperimentSpec& e, const json& j) {
  try {
    if (j.contains("model")) {
      const auto& m = j.at("model");
      if (m.contains("kind")) e.model.kind = parse_model(m.at("kind").get<std::string>());
      e.model.ising.J = m.value("J", e.model.ising.J);
      e.model.ising.g = m.value("g", e.model.ising.g);
      e.model.ising.h = m.value("h", e.model.ising.h);
      e.model.sqa.lambda = m.value("lambda", e.model.sqa.lambda);
      e.model.sqa.omega = m.value("omega", e.model.sqa.omega);
    }
    if (j.value("full_scale", false)) e.apply_full_scale();
    e.n = j.value("n", e.n);
    if (j.contains("states")) e.states = parse_states(j.at("states"));
    if (j.contains("time")) {
      const auto& t = j.at("time");
      e.time.t_end = t.value("t_end", e.time.t_end);
      e.time.dt_fine = t.value("dt_fine", e.time.dt_fine);
      e.time.t_switch = t.value("t_switch", e.time.t_switch);
      e.time.dt_coarse = t.value("dt_coarse", e.time.dt_coarse);
    }
    if (j.contains("window")) {
      e.window.t_i = j.at("window").value("t_i", e.window.t_i);
      e.window.t_f = j.at("window").value("t_f", e.window.t_f);
    }
    if (j.contains("subset")) e.subset = j.at("subset").get<std::vector<int>>();
    if (j.contains("cusp")) {
      const auto& c = j.at("cusp");
      if (c.contains("n_list")) e.cusp.n_list = c.at("n_list").get<std::vector<int>>();
      e.cusp.t_end = c.value("t_end", e.cusp.t_end);
      e.cusp.dt = c.value("dt", e.cusp.dt);
      e.cusp.detector.t_relax = c.value("t_relax", e.cusp.detector.t_relax);
      e.cusp.detector.smoothing = c.value("smoothing", e.cusp.detector.smoothing);
      e.cusp.detector.min_depth = c.value("min_depth", e.cusp.detector.min_depth);
    }
    e.dos_bins = j.value("dos_bins", e.dos_bins);
    if (j.contains("log_base")) {
      const auto b = j.at("log_base").get<std::string>();
      if (b != "2" && b != "e") throw InvalidArgument("log_base must be \"2\" or \"e\"");
      e.log_base = b == "2" ? LogBase::bits : LogBase::nats;
    }
    e.workers = j.value("workers", e.workers);
    e.seed = j.value("seed", e.seed);
    e.out_dir = j.value("out", e.out_dir);
    e.plot_scripts = j.value("plot_scripts", e.plot_scripts);
  } catch (const json::exception& ex) {
    throw InvalidArgument(std::string("config: ") + ex.what());
  }
}

inline json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path);
  try {
    return json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& ex) {
    throw InvalidArgument("config " + path + ": " + ex.what());
  }
}

/// Digest of the canonical JSON form (output directory and worker count
/// excluded, since neither changes results).
inline std::string spec_fingerprint(const ExperimentSpec& e) {
  json j = to_json(e);
  j.erase("out");
  j.erase("workers");
  j.erase("plot_scripts");
  return sha256_hex(j.dump());
}

// ---------------------------------------------------------------------------
// Output files

inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  if (std::string_view(buf) == "-0") return "0";
  return buf;
}

using CsvCell = std::variant<double, long, std::string>;

/// CSV table: '#' comment lines, a column-name row, then data.
class CsvTable {
public:
  explicit CsvTable(std::vector<std::string> columns) : columns_(std::move(columns)) {}

  void comment(const std::string& line) { comments_.push_back(line); }
  void row(std::vector<CsvCell> cells) {
    if (cells.size() != columns_.size())
      throw InvalidArgument("CSV row has " + std::to_string(cells.size()) + " cells, expected " + std::to_string(columns_.size()));
    rows_.push_back(std::move(cells));
  }
  std::size_t rows() const { return rows_.size(); }

  std::string str() const {
    std::ostringstream o;
    for (const auto& c : comments_) o << "# " << c << '\n';
    for (std::size_t k = 0; k < columns_.size(); ++k) o << (k ? "," : "") << columns_[k];
    o << '\n';
    for (const auto& r : rows_) {
      for (std::size_t k = 0; k < r.size(); ++k) {
        if (k) o << ',';
        if (const auto* d = std::get_if<double>(&r[k])) o << format_number(*d);
        else if (const auto* l = std::get_if<long>(&r[k])) o << *l;
        else o << std::get<std::string>(r[k]);
      }
      o << '\n';
    }
    return o.str();
  }

private:
  std::vector<std::string> columns_;
  std::vector<std::string> comments_;
  std::vector<std::vector<CsvCell>> rows_;
};

/// Write via a temporary sibling and rename, so readers never see a partial file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  const auto tmp = path.string() + ".part";
  {
    std::ofstream o(tmp, std::ios::binary | std::ios::trunc);
    if (!o) throw IoError("cannot write " + tmp);
    o << content;
    o.flush();
    if (!o) throw IoError("failed writing " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move " + tmp + " into place");
  }
}

struct OutputRecord {
  std::string file;  // relative to the output directory
  std::string sha256;
  std::uintmax_t bytes = 0;
  std::size_t rows = 0;
};

/// Collects the files and timings of one run in one output directory.
class RunContext {
public:
  RunContext(ExperimentSpec spec, std::string command)
      : spec_(std::move(spec)), command_(std::move(command)), dir_(spec_.out_dir), start_(clock::now()) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    const auto probe = dir_ / ".write-probe";
    std::ofstream o(probe);
    if (ec || !o) throw IoError("output directory " + dir_.string() + " is not writable");
    o.close();
    std::filesystem::remove(probe, ec);
  }

  const ExperimentSpec& spec() const { return spec_; }
  const std::filesystem::path& directory() const { return dir_; }
  const std::vector<OutputRecord>& outputs() const { return outputs_; }

  void write(const std::string& name, const CsvTable& table) { write_text(name, table.str(), table.rows()); }

  void write_text(const std::string& name, const std::string& content, std::size_t rows = 0) {
    const auto path = dir_ / name;
    write_file_atomic(path, content);
    std::lock_guard lock(mu_);
    outputs_.push_back({name, sha256_hex(content), std::uintmax_t(content.size()), rows});
  }

  /// Accumulates wall-clock seconds under a label.
  template <class F> auto timed(const std::string& label, F&& f) {
    const auto t0 = clock::now();
    struct Record {
      RunContext* ctx;
      std::string label;
      clock::time_point t0;
      ~Record() {
        std::lock_guard lock(ctx->mu_);
        ctx->timings_[label] += std::chrono::duration<double>(clock::now() - t0).count();
      }
    } rec{this, label, t0};
    return f();
  }

  /// Removes every file written by this run.
  void discard_outputs() {
    std::error_code ec;
    for (const auto& o : outputs_) std::filesystem::remove(dir_ / o.file, ec);
    outputs_.clear();
  }

  void add_note(const std::string& key, json value) { notes_[key] = std::move(value); }

  json manifest(const std::string& status, const std::string& error = {}) const {
    json files = json::array();
    for (const auto& o : outputs_)
      files.push_back({{"file", o.file}, {"sha256", o.sha256}, {"bytes", o.bytes}, {"rows", o.rows}});
    json timings = json::object();
    for (const auto& [k, v] : timings_) timings[k] = v;
    timings["total"] = std::chrono::duration<double>(clock::now() - start_).count();
    json m{{"schema", "tmi-manifest/1"},
           {"software_version", software_version()},
           {"command", command_},
           {"status", status},
           {"spec_fingerprint", spec_fingerprint(spec_)},
           {"spec", to_json(spec_)},
           {"outputs", files},
           {"timings_seconds", timings}};
    if (!notes_.empty()) m["notes"] = notes_;
    if (!error.empty()) m["error"] = error;
    return m;
  }

private:
  using clock = std::chrono::steady_clock;
  ExperimentSpec spec_;
  std::string command_;
  std::filesystem::path dir_;
  clock::time_point start_;
  std::vector<OutputRecord> outputs_;
  std::map<std::string, double> timings_;
  json notes_ = json::object();
  mutable std::mutex mu_;
};

inline constexpr const char* kManifestName = "manifest.json";

/// Writes manifest.json for a finished (or failed) run and returns its path.
inline std::filesystem::path emit_manifest(const RunContext& ctx, const std::string& status = "complete",
                                           const std::string& error = {}) {
  const auto path = ctx.directory() / kManifestName;
  write_file_atomic(path, ctx.manifest(status, error).dump(2) + "\n");
  return path;
}

struct VerifyIssue {
  std::string file;
  std::string problem;
};

/// Re-hashes every file a manifest lists; returns the mismatches.
inline std::vector<VerifyIssue> verify_manifest(const std::filesystem::path& manifest_path) {
  const json m = load_json_file(manifest_path.string());
  const auto dir = manifest_path.parent_path();
  std::vector<VerifyIssue> issues;
  if (m.value("schema", "") != "tmi-manifest/1") issues.push_back({manifest_path.string(), "unknown manifest schema"});
  for (const auto& f : m.at("outputs")) {
    const auto name = f.at("file").get<std::string>();
    const auto path = dir / name;
    if (!std::filesystem::exists(path)) {
      issues.push_back({name, "missing"});
      continue;
    }
    if (sha256_file(path.string()) != f.at("sha256").get<std::string>()) issues.push_back({name, "checksum mismatch"});
  }
  return issues;
}

// ---------------------------------------------------------------------------
// Worker pool

/// Runs f(i) for i in [0, count) on up to `workers` threads. Results must be
/// stored by index; the first exception is rethrown after all threads stop.
template <class F> void parallel_for(std::size_t count, int workers, F&& f) {
  const std::size_t threads = std::min<std::size_t>(std::size_t(std::max(1, workers)), count);
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count || failed.load()) return;
        try {
          f(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!error) error = std::current_exception();
          failed = true;
        }
      }
    });
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

} // namespace tmi
