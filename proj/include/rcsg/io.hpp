#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <complex>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <thread>
#include <vector>

#include "rcsg/energy.hpp"
#include "rcsg/field.hpp"
#include "rcsg/line_search.hpp"
#include "rcsg/mesh.hpp"
#include "rcsg/optimizer.hpp"
#include "rcsg/verifier.hpp"

namespace rcsg {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Number formatting

/// Round-trip-safe text for a double at 17 significant digits,
/// independent of the global locale.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
  if (ec != std::errc{}) throw std::runtime_error("format_double: conversion failed");
  return std::string(buf, ptr);
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (!s.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last) throw std::invalid_argument("not a number: '" + std::string(s) + "'");
  return v;
}

inline long parse_integer(std::string_view s) {
  long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw std::invalid_argument("not an integer: '" + std::string(s) + "'");
  return v;
}

// ---------------------------------------------------------------------------
// Configuration

enum class InitialKind { Vortex, ConjVortex, Mixed, File };

inline std::string to_string(InitialKind k) {
  switch (k) {
    case InitialKind::Vortex: return "vortex";
    case InitialKind::ConjVortex: return "conj-vortex";
    case InitialKind::Mixed: return "mixed";
    case InitialKind::File: return "file";
  }
  return "?";
}

struct RunConfig {
  std::string preset;
  Physics physics;
  int n = 0;
  SolverConfig solver;
  InitialKind initial = InitialKind::Vortex;
  std::string initial_file;
  std::string output_dir = "out";
  std::string reference_state;
  std::optional<double> reference_energy;
  bool certify = true;
  int certify_k = 7;
};

struct Preset {
  const char* name;
  double L, gamma_x, gamma_y, omega, kappa;
  InitialKind initial;
  int n;
};

// exp4 is run with P1 elements on a finer mesh; its Omega defaults to 2 and
// is meant to be overridden with 2.4 or 2.7.
inline constexpr Preset kPresets[] = {
    {"exp1", 6.0, 2.0, 1.9, 1.9, 500.0, InitialKind::Vortex, 256},
    {"exp2", 8.0, 1.1, 1.3, 1.2, 400.0, InitialKind::ConjVortex, 256},
    {"exp3", 3.0, 11.0, 10.0, 9.0, 1000.0, InitialKind::Mixed, 256},
    {"exp4", 6.0, 2.0, 2.0, 2.0, 200.0, InitialKind::Mixed, 512},
    {"exp1-coarse", 6.0, 2.0, 1.9, 1.9, 500.0, InitialKind::Vortex, 64},
    {"exp2-coarse", 8.0, 1.1, 1.3, 1.2, 400.0, InitialKind::ConjVortex, 64},
    {"exp3-coarse", 3.0, 11.0, 10.0, 9.0, 1000.0, InitialKind::Mixed, 64},
    {"exp4-coarse", 6.0, 2.0, 2.0, 2.0, 200.0, InitialKind::Mixed, 64},
};

inline const Preset* find_preset(std::string_view name) {
  for (const auto& p : kPresets)
    if (name == p.name) return &p;
  return nullptr;
}

inline void apply_preset(RunConfig& cfg, const Preset& p) {
  cfg.preset = p.name;
  cfg.physics = {p.gamma_x, p.gamma_y, p.omega, p.kappa, p.L};
  cfg.initial = p.initial;
  cfg.n = p.n;
}

inline RunConfig preset_config(std::string_view name) {
  const Preset* p = find_preset(name);
  if (!p) throw ConfigError("unknown preset '" + std::string(name) + "'");
  RunConfig cfg;
  apply_preset(cfg, *p);
  return cfg;
}

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string line_prefix(int line) { return "line " + std::to_string(line) + ": "; }

inline MetricKind parse_metric(const std::string& v) {
  if (v == "au" || v == "a_u") return MetricKind::AU;
  if (v == "h10" || v == "H10") return MetricKind::H10;
  throw std::invalid_argument("metric must be 'au' or 'h10', got '" + v + "'");
}

inline MomentumKind parse_momentum(const std::string& v) {
  static const std::map<std::string, MomentumKind> names = {{"zero", MomentumKind::ZERO}, {"dy", MomentumKind::DY},
                                                            {"fr", MomentumKind::FR},     {"pr", MomentumKind::PR},
                                                            {"hs", MomentumKind::HS}};
  std::string k = v;
  std::transform(k.begin(), k.end(), k.begin(), [](unsigned char c) { return std::tolower(c); });
  auto it = names.find(k);
  if (it == names.end()) throw std::invalid_argument("momentum must be one of zero, dy, fr, pr, hs; got '" + v + "'");
  return it->second;
}

inline InitialKind parse_initial(const std::string& v) {
  if (v == "vortex") return InitialKind::Vortex;
  if (v == "conj-vortex") return InitialKind::ConjVortex;
  if (v == "mixed") return InitialKind::Mixed;
  if (v == "file") return InitialKind::File;
  throw std::invalid_argument("initial must be one of vortex, conj-vortex, mixed, file; got '" + v + "'");
}

inline StopRule parse_stop_rule(const std::string& v) {
  if (v == "consecutive") return StopRule::Consecutive;
  if (v == "reference") return StopRule::Reference;
  if (v == "gradient") return StopRule::Gradient;
  throw std::invalid_argument("stop_rule must be consecutive, reference or gradient; got '" + v + "'");
}

inline bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("expected true or false, got '" + v + "'");
}

}  // namespace detail

/// Parses key=value lines ('#' starts a comment). A preset, wherever it
/// appears, is applied first and the remaining keys override it. Every error
/// names the offending line.
inline RunConfig parse_config(std::string_view text) {
  struct Entry {
    int line;
    std::string key, value;
  };
  std::vector<Entry> entries;
  std::map<std::string, int> seen;
  std::istringstream in{std::string(text)};
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    const std::string line = detail::trim(raw);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(detail::line_prefix(lineno) + "expected key=value, got '" + line + "'");
    Entry e{lineno, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1))};
    if (e.key.empty()) throw ConfigError(detail::line_prefix(lineno) + "empty key");
    if (e.key == "omega") e.key = "Omega";
    if (seen.count(e.key))
      throw ConfigError(detail::line_prefix(lineno) + "duplicate key '" + e.key + "' (first on line " +
                        std::to_string(seen[e.key]) + ")");
    seen[e.key] = lineno;
    entries.push_back(std::move(e));
  }

  RunConfig cfg;
  if (auto it = seen.find("preset"); it != seen.end()) {
    const auto& e = *std::find_if(entries.begin(), entries.end(), [](const Entry& x) { return x.key == "preset"; });
    const Preset* p = find_preset(e.value);
    if (!p) throw ConfigError(detail::line_prefix(e.line) + "unknown preset '" + e.value + "'");
    apply_preset(cfg, *p);
  } else {
    static const char* required[] = {"L", "gamma_x", "gamma_y", "Omega", "kappa"};
    for (const char* k : required)
      if (!seen.count(k)) throw ConfigError("missing required key '" + std::string(k) + "' (no preset given)");
    if (!seen.count("n") && !seen.count("mesh_exponent"))
      throw ConfigError("missing required key 'n' or 'mesh_exponent' (no preset given)");
  }

  for (const auto& e : entries) {
    try {
      const std::string& k = e.key;
      const std::string& v = e.value;
      if (k == "preset") continue;
      else if (k == "L") cfg.physics.L = parse_double(v);
      else if (k == "gamma_x") cfg.physics.gamma_x = parse_double(v);
      else if (k == "gamma_y") cfg.physics.gamma_y = parse_double(v);
      else if (k == "Omega") cfg.physics.omega = parse_double(v);
      else if (k == "kappa") cfg.physics.kappa = parse_double(v);
      else if (k == "n") cfg.n = static_cast<int>(parse_integer(v));
      else if (k == "mesh_exponent") {
        const long m = parse_integer(v);
        if (m < 2 || m > 14) throw std::invalid_argument("mesh_exponent must lie in [2, 14]");
        cfg.n = 1 << m;
      }
      else if (k == "metric") cfg.solver.metric = detail::parse_metric(v);
      else if (k == "momentum") cfg.solver.momentum = detail::parse_momentum(v);
      else if (k == "initial") cfg.initial = detail::parse_initial(v);
      else if (k == "initial_file") cfg.initial_file = v;
      else if (k == "tau_min") cfg.solver.tau_min = parse_double(v);
      else if (k == "tau_max") cfg.solver.tau_max = parse_double(v);
      else if (k == "golden_tol") cfg.solver.golden_tol = parse_double(v);
      else if (k == "stop_rule") cfg.solver.stop_rule = detail::parse_stop_rule(v);
      else if (k == "consecutive_tol") cfg.solver.consecutive_tol = parse_double(v);
      else if (k == "reference_tol") cfg.solver.reference_tol = parse_double(v);
      else if (k == "gradient_tol") cfg.solver.gradient_tol = parse_double(v);
      else if (k == "max_iter") cfg.solver.max_iter = static_cast<int>(parse_integer(v));
      else if (k == "linear_tol") cfg.solver.linear.tol = parse_double(v);
      else if (k == "output_dir") cfg.output_dir = v;
      else if (k == "reference_state") cfg.reference_state = v;
      else if (k == "reference_energy") cfg.reference_energy = parse_double(v);
      else if (k == "certify") cfg.certify = detail::parse_bool(v);
      else if (k == "certify_k") cfg.certify_k = static_cast<int>(parse_integer(v));
      else throw ConfigError("unknown key '" + k + "'");
    } catch (const ConfigError& err) {
      throw ConfigError(detail::line_prefix(e.line) + err.what());
    } catch (const std::invalid_argument& err) {
      throw ConfigError(detail::line_prefix(e.line) + "key '" + e.key + "': " + err.what());
    }
  }

  auto line_of = [&](const char* key) {
    if (auto it = seen.find(key); it != seen.end()) return detail::line_prefix(it->second);
    if (auto it = seen.find("preset"); it != seen.end()) return detail::line_prefix(it->second);
    return std::string();
  };
  if (!(cfg.n >= 4)) throw ConfigError(line_of("n") + "mesh needs n >= 4, got " + std::to_string(cfg.n));
  if (!(cfg.physics.L > 0.0)) throw ConfigError(line_of("L") + "L must be positive");
  if (!(cfg.physics.gamma_x > 0.0 && cfg.physics.gamma_y > 0.0))
    throw ConfigError(line_of("gamma_x") + "trapping frequencies must be positive");
  if (cfg.physics.kappa < 0.0) throw ConfigError(line_of("kappa") + "kappa must be non-negative");
  if (cfg.initial == InitialKind::File && cfg.initial_file.empty())
    throw ConfigError(line_of("initial") + "initial=file needs initial_file");
  if (cfg.certify_k < 2 || cfg.certify_k > 10) throw ConfigError(line_of("certify_k") + "certify_k must lie in [2, 10]");
  if (cfg.solver.stop_rule == StopRule::Reference && !cfg.reference_energy && cfg.reference_state.empty())
    throw ConfigError(line_of("stop_rule") + "stop_rule=reference needs reference_energy or reference_state");
  try {
    cfg.solver.validate();
  } catch (const std::invalid_argument& err) {
    throw ConfigError(err.what());
  }
  const Mesh mesh = build_mesh(cfg.physics.L, cfg.n);
  const A1Report a1 = check_A1(cfg.physics, mesh);
  if (!a1.satisfied) throw ConfigError(line_of("Omega") + "assumption (A1) violated: " + a1.message);
  return cfg;
}

inline RunConfig load_config(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

/// Effective configuration in the same key=value format parse_config reads.
inline std::string format_config(const RunConfig& c) {
  std::ostringstream os;
  if (!c.preset.empty()) os << "# preset " << c.preset << "\n";
  os << "L=" << format_double(c.physics.L) << "\n"
     << "gamma_x=" << format_double(c.physics.gamma_x) << "\n"
     << "gamma_y=" << format_double(c.physics.gamma_y) << "\n"
     << "Omega=" << format_double(c.physics.omega) << "\n"
     << "kappa=" << format_double(c.physics.kappa) << "\n"
     << "n=" << c.n << "\n"
     << "metric=" << to_string(c.solver.metric) << "\n"
     << "momentum=" << to_string(c.solver.momentum) << "\n"
     << "initial=" << to_string(c.initial) << "\n";
  if (!c.initial_file.empty()) os << "initial_file=" << c.initial_file << "\n";
  os << "tau_min=" << format_double(c.solver.tau_min) << "\n"
     << "tau_max=" << format_double(c.solver.tau_max) << "\n"
     << "golden_tol=" << format_double(c.solver.golden_tol) << "\n"
     << "stop_rule=" << to_string(c.solver.stop_rule) << "\n"
     << "consecutive_tol=" << format_double(c.solver.consecutive_tol) << "\n"
     << "reference_tol=" << format_double(c.solver.reference_tol) << "\n"
     << "gradient_tol=" << format_double(c.solver.gradient_tol) << "\n"
     << "max_iter=" << c.solver.max_iter << "\n"
     << "linear_tol=" << format_double(c.solver.linear.tol) << "\n"
     << "output_dir=" << c.output_dir << "\n";
  if (!c.reference_state.empty()) os << "reference_state=" << c.reference_state << "\n";
  if (c.reference_energy) os << "reference_energy=" << format_double(*c.reference_energy) << "\n";
  os << "certify=" << (c.certify ? "true" : "false") << "\n"
     << "certify_k=" << c.certify_k << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// State files

/// "GPSTATE <version> <n> <L>" followed by one "re im" line per interior
/// node in mesh order.
inline void write_state(std::ostream& os, const Mesh& mesh, const Field& u) {
  if (u.num_dofs() != mesh.num_dofs()) throw std::invalid_argument("write_state: field does not match mesh");
  os << "GPSTATE 1 " << mesh.n << " " << format_double(mesh.L) << "\n";
  for (int k = 0; k < u.num_dofs(); ++k) os << format_double(u.re()[k]) << " " << format_double(u.im()[k]) << "\n";
}

struct StateFile {
  int n = 0;
  double L = 0.0;
  Field u;
};

inline StateFile read_state(std::istream& is) {
  std::string tag;
  int version = 0;
  StateFile s;
  std::string Ltext;
  if (!(is >> tag >> version >> s.n >> Ltext) || tag != "GPSTATE")
    throw ConfigError("state file: missing GPSTATE header");
  if (version != 1) throw ConfigError("state file: unsupported version " + std::to_string(version));
  s.L = parse_double(Ltext);
  if (s.n < 2) throw ConfigError("state file: invalid n");
  const int dofs = (s.n - 1) * (s.n - 1);
  s.u = Field(dofs);
  std::string re, im;
  for (int k = 0; k < dofs; ++k) {
    if (!(is >> re >> im)) throw ConfigError("state file: truncated at node " + std::to_string(k));
    s.u.re()[k] = parse_double(re);
    s.u.im()[k] = parse_double(im);
  }
  return s;
}

inline void save_state(const fs::path& path, const Mesh& mesh, const Field& u) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
  write_state(f, mesh, u);
}

inline StateFile load_state(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read state file '" + path.string() + "'");
  return read_state(f);
}

// ---------------------------------------------------------------------------
// Initial states

/// Interpolated and L2-normalized starting guess.
inline Field initial_state(InitialKind kind, const Physics& physics, const EnergyContext& ctx,
                           const std::string& file = {}) {
  const Mesh& mesh = ctx.mesh();
  if (kind == InitialKind::File) {
    StateFile s = load_state(file);
    if (s.n != mesh.n || s.L != mesh.L)
      throw ConfigError("initial state file '" + file + "' was written for a different mesh");
    return normalize(ctx, s.u);
  }
  const double om = physics.omega;
  const double c = 1.0 / std::sqrt(std::numbers::pi);
  ComplexFunction f;
  switch (kind) {
    case InitialKind::Vortex:
      f = [=](double x, double y) { return om * c * std::complex<double>(x, y) * std::exp(-(x * x + y * y) / 2); };
      break;
    case InitialKind::ConjVortex:
      f = [=](double x, double y) { return om * c * std::complex<double>(x, -y) * std::exp(-(x * x + y * y) / 2); };
      break;
    default:
      f = [=](double x, double y) {
        const double g = std::exp(-(x * x + y * y) / 2);
        return om * c * std::complex<double>(x, y) * g + (1.0 - om) * c * g;
      };
      break;
  }
  return normalize(ctx, interpolate(mesh, f));
}

// ---------------------------------------------------------------------------
// Output files

inline void write_trace(std::ostream& os, const std::vector<IterationRecord>& trace) {
  os << "iter,energy,energy_error,tau,beta,grad_norm,fallback\n";
  for (const auto& r : trace) {
    os << r.iter << ',' << format_double(r.energy) << ',';
    if (!std::isnan(r.energy_error)) os << format_double(r.energy_error);
    os << ',' << format_double(r.tau) << ',' << format_double(r.beta) << ',' << format_double(r.grad_norm) << ','
       << (r.fallback ? 1 : 0) << '\n';
  }
}

/// "nx ny L", then |u|^2 on all (n+1)^2 nodes, one mesh row per line.
inline void write_density(std::ostream& os, const Mesh& mesh, const Field& u) {
  const int side = mesh.nodes_per_side();
  os << side << ' ' << side << ' ' << format_double(mesh.L) << '\n';
  for (int j = 0; j < side; ++j) {
    for (int i = 0; i < side; ++i) {
      const int dof = mesh.dof_of_node[j * side + i];
      const double rho = dof < 0 ? 0.0 : std::norm(u.at(dof));
      if (i) os << ' ';
      os << format_double(rho);
    }
    os << '\n';
  }
}

inline void write_certificate(std::ostream& os, const Certificate& c) {
  os << "energy " << format_double(c.energy) << "\n"
     << "lambda " << format_double(c.lambda) << "\n"
     << "residual_norm " << format_double(c.residual_norm) << "\n"
     << "spectrum";
  for (double v : c.spectrum) os << ' ' << format_double(v);
  os << "\nspectrum_residuals";
  for (double v : c.spectrum_residuals) os << ' ' << format_double(v);
  os << "\nalignment " << format_double(c.alignment) << "\n"
     << "verdict " << to_string(c.verdict) << "\n"
     << "reason " << c.reason << "\n";
}

inline void write_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
  f << content;
}

template <class Writer>
void write_with(const fs::path& path, Writer&& w) {
  std::ostringstream os;
  w(os);
  write_file(path, os.str());
}

// ---------------------------------------------------------------------------
// Runs

struct RunOutcome {
  SolveResult solve;
  std::optional<Certificate> certificate;
  std::optional<double> reference_energy;
};

inline std::shared_ptr<const EnergyContext> make_context(const RunConfig& cfg) {
  auto mesh = std::make_shared<const Mesh>(build_mesh(cfg.physics.L, cfg.n));
  return std::make_shared<const EnergyContext>(mesh, cfg.physics);
}

inline std::optional<double> resolve_reference(const RunConfig& cfg, const EnergyContext& ctx) {
  if (cfg.reference_energy) return cfg.reference_energy;
  if (cfg.reference_state.empty()) return std::nullopt;
  StateFile s = load_state(cfg.reference_state);
  if (s.n != ctx.mesh().n || s.L != ctx.mesh().L)
    throw ConfigError("reference state '" + cfg.reference_state + "' was written for a different mesh");
  return energy(ctx, s.u);
}

/// Solves, certifies and writes trace.csv, density.grid, state.gpstate,
/// certificate.txt, status.txt and config.effective into cfg.output_dir.
inline RunOutcome run_experiment(const RunConfig& cfg, std::shared_ptr<const EnergyContext> ctx = nullptr) {
  if (!ctx) ctx = make_context(cfg);
  const fs::path out = cfg.output_dir;
  fs::create_directories(out);
  write_file(out / "config.effective", format_config(cfg));

  RunOutcome r;
  r.reference_energy = resolve_reference(cfg, *ctx);
  const Field u0 = initial_state(cfg.initial, cfg.physics, *ctx, cfg.initial_file);
  std::string failure;
  try {
    r.solve = solve_ground_state(*ctx, cfg.solver, u0, r.reference_energy);
  } catch (const std::exception& e) {
    failure = e.what();
    r.solve.u = u0;
    r.solve.status = SolveStatus::Stagnated;
  }

  write_with(out / "trace.csv", [&](std::ostream& os) { write_trace(os, r.solve.trace); });
  write_with(out / "density.grid", [&](std::ostream& os) { write_density(os, ctx->mesh(), r.solve.u); });
  save_state(out / "state.gpstate", ctx->mesh(), r.solve.u);
  if (cfg.certify && failure.empty()) {
    CertifyOptions co;
    co.spectrum.k = cfg.certify_k;
    r.certificate = certify(*ctx, r.solve.u, co);
    write_with(out / "certificate.txt", [&](std::ostream& os) { write_certificate(os, *r.certificate); });
  }
  write_with(out / "status.txt", [&](std::ostream& os) {
    os << "status " << to_string(r.solve.status) << "\n"
       << "iterations " << r.solve.iterations << "\n"
       << "energy " << format_double(r.solve.energy) << "\n"
       << "lambda " << format_double(r.solve.lambda) << "\n"
       << "grad_norm " << format_double(r.solve.grad_norm) << "\n";
    if (!failure.empty()) os << "error " << failure << "\n";
  });
  return r;
}

/// Reference configuration: a_u metric, PR momentum, consecutive-energy stop.
inline RunConfig reference_config(RunConfig cfg) {
  cfg.solver.metric = MetricKind::AU;
  cfg.solver.momentum = MomentumKind::PR;
  cfg.solver.stop_rule = StopRule::Consecutive;
  cfg.solver.consecutive_tol = 1e-13;
  cfg.reference_energy.reset();
  cfg.reference_state.clear();
  return cfg;
}

struct Method {
  MetricKind metric;
  MomentumKind momentum;
};

inline std::string method_name(const Method& m) { return to_string(m.metric) + "-" + to_string(m.momentum); }

/// "au:pr,h10:pr,au:zero" or "pr,hs" (a_u metric implied).
inline std::vector<Method> parse_methods(std::string_view list) {
  std::vector<Method> out;
  std::string item;
  std::istringstream in{std::string(list)};
  while (std::getline(in, item, ',')) {
    item = detail::trim(item);
    if (item.empty()) continue;
    try {
      const auto colon = item.find(':');
      if (colon == std::string::npos) out.push_back({MetricKind::AU, detail::parse_momentum(item)});
      else
        out.push_back({detail::parse_metric(item.substr(0, colon)), detail::parse_momentum(item.substr(colon + 1))});
    } catch (const std::invalid_argument& e) {
      throw ConfigError("method '" + item + "': " + e.what());
    }
  }
  if (out.empty()) throw ConfigError("empty method list");
  return out;
}

struct ComparisonRow {
  Method method;
  int iterations = -1;  // -1: did not reach the tolerance
  double final_energy = 0.0;
  double final_error = 0.0;
  double best_error = 0.0;
  int fallbacks = 0;
  SolveStatus status = SolveStatus::MaxIterations;
};

struct Comparison {
  double reference_energy = 0.0;
  std::vector<ComparisonRow> rows;
};

/// Worker count for independent runs: GP_THREADS if set, else hardware
/// concurrency, never more than `jobs`.
inline int parallel_runs(int jobs) {
  int cap = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("GP_THREADS")) {
    try {
      cap = std::max(1, static_cast<int>(parse_integer(env)));
    } catch (const std::invalid_argument&) {
    }
  }
  return std::max(1, std::min(cap, jobs));
}

/// Computes (or reuses) the reference state in out/reference, then runs
/// every method to reference_tol and writes out/comparison.csv plus one
/// directory of artifacts per method.
inline Comparison compare_methods(const RunConfig& base, const std::vector<Method>& methods, const fs::path& out) {
  auto ctx = make_context(base);
  fs::create_directories(out);

  const fs::path ref_dir = out / "reference";
  const fs::path ref_state = ref_dir / "state.gpstate";
  double e_ref = 0.0;
  bool cached = false;
  if (fs::exists(ref_state)) {
    StateFile s = load_state(ref_state);
    if (s.n == ctx->mesh().n && s.L == ctx->mesh().L) {
      e_ref = energy(*ctx, s.u);
      cached = true;
    }
  }
  if (!cached) {
    RunConfig rc = reference_config(base);
    rc.output_dir = ref_dir.string();
    rc.certify = false;
    e_ref = run_experiment(rc, ctx).solve.energy;
  }

  Comparison cmp;
  cmp.reference_energy = e_ref;
  cmp.rows.resize(methods.size());
  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  std::string first_error;
  auto worker = [&] {
    for (std::size_t i = next++; i < methods.size(); i = next++) {
      try {
        RunConfig rc = base;
        rc.solver.metric = methods[i].metric;
        rc.solver.momentum = methods[i].momentum;
        rc.solver.stop_rule = StopRule::Reference;
        rc.reference_energy = e_ref;
        rc.reference_state.clear();
        rc.certify = false;
        rc.output_dir = (out / method_name(methods[i])).string();
        const RunOutcome r = run_experiment(rc, ctx);
        ComparisonRow& row = cmp.rows[i];
        row.method = methods[i];
        row.status = r.solve.status;
        row.iterations = r.solve.status == SolveStatus::Converged ? iterations_to(r.solve.trace, base.solver.reference_tol) : -1;
        row.final_energy = r.solve.energy;
        row.final_error = r.solve.energy - e_ref;
        row.best_error = row.final_error;
        for (const auto& rec : r.solve.trace) {
          row.best_error = std::min(row.best_error, rec.energy_error);
          if (rec.fallback) ++row.fallbacks;
        }
      } catch (const std::exception& e) {
        std::lock_guard lock(err_mutex);
        if (first_error.empty()) first_error = method_name(methods[i]) + ": " + e.what();
      }
    }
  };
  const int threads = parallel_runs(static_cast<int>(methods.size()));
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (!first_error.empty()) throw std::runtime_error(first_error);

  write_with(out / "comparison.csv", [&](std::ostream& os) {
    os << "method,metric,momentum,iterations,final_energy,final_error,best_error,fallbacks,status\n";
    for (const auto& r : cmp.rows) {
      os << method_name(r.method) << ',' << to_string(r.method.metric) << ',' << to_string(r.method.momentum) << ',';
      if (r.iterations >= 0) os << r.iterations;
      else os << "DNF";
      os << ',' << format_double(r.final_energy) << ',' << format_double(r.final_error) << ','
         << format_double(r.best_error) << ',' << r.fallbacks << ',' << to_string(r.status) << '\n';
    }
  });
  return cmp;
}

}  // namespace rcsg
