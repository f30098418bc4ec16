#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rcsg/energy.hpp"
#include "rcsg/field.hpp"
#include "rcsg/gradients.hpp"
#include "rcsg/line_search.hpp"

namespace rcsg {

enum class MomentumKind { ZERO, DY, FR, PR, HS };

inline std::string to_string(MomentumKind k) {
  switch (k) {
    case MomentumKind::ZERO: return "zero";
    case MomentumKind::DY: return "dy";
    case MomentumKind::FR: return "fr";
    case MomentumKind::PR: return "pr";
    case MomentumKind::HS: return "hs";
  }
  return "?";
}

enum class StopRule { Consecutive, Reference, Gradient };

inline std::string to_string(StopRule r) {
  switch (r) {
    case StopRule::Consecutive: return "consecutive";
    case StopRule::Reference: return "reference";
    case StopRule::Gradient: return "gradient";
  }
  return "?";
}

struct SolverConfig {
  MetricKind metric = MetricKind::AU;
  MomentumKind momentum = MomentumKind::PR;
  double tau_min = 0.001;
  double tau_max = 2.0;
  double golden_tol = 1e-10;
  StopRule stop_rule = StopRule::Consecutive;
  double consecutive_tol = 1e-13;
  double reference_tol = 1e-9;
  double gradient_tol = 1e-8;
  int max_iter = 10000;
  LinearSolveOptions linear{};

  void validate() const {
    if (!(0.0 < tau_min && tau_min < tau_max)) throw std::invalid_argument("solver config: need 0 < tau_min < tau_max");
    if (!(golden_tol > 0.0 && consecutive_tol > 0.0 && reference_tol > 0.0 && gradient_tol > 0.0 && linear.tol > 0.0))
      throw std::invalid_argument("solver config: tolerances must be positive");
    if (max_iter < 0) throw std::invalid_argument("solver config: max_iter must be non-negative");
  }
};

struct IterationRecord {
  int iter = 0;
  double energy = 0.0;
  /// E(u^n) - E_ref; NaN without a reference.
  double energy_error = std::numeric_limits<double>::quiet_NaN();
  double tau = 0.0;
  double beta = 0.0;
  /// ||g^n||_X of the Riemannian gradient at the recorded iterate.
  double grad_norm = 0.0;
  bool fallback = false;

  // Diagnostics of the step that produced this iterate.
  double descent = 0.0;           // <E'(u^{n-1}), d^{n-1}>
  double momentum_descent = 0.0;  // same for the direction built with the momentum beta, before any fallback
  double descent_closed = std::numeric_limits<double>::quiet_NaN();  // AU closed form of the same value
  bool closed_form_valid = false;  // previous tau was an interior optimum and no fallback
  bool at_boundary = false;
  double orthogonality = 0.0;      // <E'(u^n), d^{n-1} - (d^{n-1}, u^n) u^n>
  bool beta_degenerate = false;    // zero denominator in the momentum formula
};

/// Scalars entering the momentum formulas at iteration n, all in the metric
/// at u^n except `ud_prev`, the directional derivative at the previous point.
struct MomentumInputs {
  double g_norm2 = 0.0;       // ||g^n||_X^2
  double g_prev_norm2 = 0.0;  // ||g^{n-1}||_{X_{n-1}}^2
  double gd_prev = 0.0;       // (g^n, d^{n-1})_X
  double ud_prev = 0.0;       // <E'(u^{n-1}), d^{n-1}>
  double mixed = 0.0;         // (g^n, g^n - g^{n-1})_X
};

struct MomentumValue {
  double beta = 0.0;
  bool degenerate = false;
};

inline MomentumValue momentum_beta(MomentumKind kind, const MomentumInputs& s) {
  auto ratio = [](double num, double den, bool clamp) -> MomentumValue {
    if (den == 0.0 || !std::isfinite(den)) return {0.0, true};
    const double b = num / den;
    return {clamp ? std::max(0.0, b) : b, false};
  };
  switch (kind) {
    case MomentumKind::ZERO: return {0.0, false};
    case MomentumKind::DY: return ratio(s.g_norm2, s.gd_prev - s.ud_prev, true);
    case MomentumKind::FR: return ratio(s.g_norm2, s.g_prev_norm2, false);
    case MomentumKind::PR: return ratio(s.mixed, s.g_prev_norm2, true);
    case MomentumKind::HS: return ratio(s.mixed, s.gd_prev - s.ud_prev, true);
  }
  return {0.0, true};
}

/// Everything known about the current iterate u^n plus the bookkeeping from
/// the previous step. Rebuilt as a whole by `SolverState::at`.
struct SolverState {
  int iter = 0;
  Field u;
  double energy = 0.0;
  Vector eprime;
  Metric metric;
  TangentProjector projector;
  Field grad;           // g^n
  double grad_norm2 = 0.0;

  bool has_previous = false;
  Field d_prev{};
  Field grad_prev{};
  double grad_prev_norm2 = 0.0;
  double ud_prev = 0.0;
  bool prev_interior = false;  // tau^{n-1} was an interior line-search optimum and not a fallback

  static SolverState at(const EnergyContext& ctx, const SolverConfig& cfg, const Field& u, int iter,
                        const SolverState* previous = nullptr) {
    Metric metric = Metric::make(cfg.metric, ctx, u);
    const Field* warm = previous ? &previous->projector.riesz_of_point() : nullptr;
    TangentProjector proj(metric, ctx, u, cfg.linear, warm);
    Field g = riemannian_gradient(metric, ctx, proj, cfg.linear);
    const double gn2 = metric.norm2(g);
    SolverState s{iter, u, rcsg::energy(ctx, u), rcsg::eprime(ctx, u), std::move(metric), std::move(proj), std::move(g), gn2};
    return s;
  }

  MomentumInputs momentum_inputs() const {
    MomentumInputs m;
    m.g_norm2 = grad_norm2;
    if (!has_previous) return m;
    m.g_prev_norm2 = grad_prev_norm2;
    m.gd_prev = metric.inner(grad, d_prev);
    m.ud_prev = ud_prev;
    m.mixed = grad_norm2 - metric.inner(grad, grad_prev);
    return m;
  }
};

inline Field initial_direction(const SolverState& s) { return -s.grad; }

/// d^n = -g^n + beta P(d^{n-1}).
inline Field search_direction(const SolverState& s, double beta) {
  Field d = -s.grad;
  if (beta != 0.0 && s.has_previous) d.vec().noalias() += beta * s.projector.project(s.d_prev).vec();
  return d;
}

/// Closed form of <E'(u^n), d^n> for the AU metric, valid when tau^{n-1}
/// was an exact interior line-search optimum.
inline double descent_closed_form(const EnergyContext& ctx, const SolverState& s, double beta) {
  const double dot = s.has_previous ? ctx.l2_inner(s.d_prev, s.u) : 0.0;
  return (-1.0 + beta * dot) * s.grad_norm2;
}

enum class StepOutcome { Advanced, Stagnated };

struct StepResult {
  StepOutcome outcome = StepOutcome::Advanced;
  IterationRecord record;
  /// Energy of the best rejected candidate when stagnating.
  double candidate_energy = std::numeric_limits<double>::quiet_NaN();
};

/// One iteration: momentum, direction, golden-section step, retraction. A
/// step that fails the descent test or does not lower the energy is redone
/// once with beta = 0; if that fails too the state is left unchanged.
inline StepResult step(const EnergyContext& ctx, const SolverConfig& cfg, SolverState& s) {
  MomentumValue mv{0.0, false};
  if (s.has_previous) mv = momentum_beta(cfg.momentum, s.momentum_inputs());

  struct Attempt {
    Field d;
    double descent;
    LineSearchResult ls;
    Field u_new;
    double e_new;
    bool ok;
  };
  auto attempt = [&](double beta) {
    Attempt a;
    a.d = search_direction(s, beta);
    a.descent = s.eprime.dot(a.d.vec());
    if (!(a.descent < 0.0)) {
      a.ok = false;
      a.e_new = std::numeric_limits<double>::quiet_NaN();
      return a;
    }
    a.ls = line_search_golden(ctx, s.u, a.d, cfg.tau_min, cfg.tau_max, cfg.golden_tol);
    a.u_new = retract(ctx, s.u, a.d, a.ls.tau);
    a.e_new = energy(ctx, a.u_new);
    a.ok = a.ls.decreased && a.e_new < s.energy;
    return a;
  };

  double beta = mv.beta;
  bool fallback = mv.degenerate && cfg.momentum != MomentumKind::ZERO;
  Attempt a = attempt(beta);
  const double momentum_descent = a.descent;
  if (!a.ok && beta != 0.0) {
    beta = 0.0;
    fallback = true;
    a = attempt(0.0);
  }

  StepResult out;
  IterationRecord& rec = out.record;
  rec.iter = s.iter + 1;
  rec.tau = a.ok ? a.ls.tau : 0.0;
  rec.beta = beta;
  rec.fallback = fallback;
  rec.beta_degenerate = mv.degenerate;
  rec.descent = a.descent;
  rec.momentum_descent = momentum_descent;
  if (cfg.metric == MetricKind::AU) rec.descent_closed = descent_closed_form(ctx, s, beta);
  rec.closed_form_valid = s.prev_interior && !fallback;
  if (!a.ok) {
    out.outcome = StepOutcome::Stagnated;
    out.candidate_energy = a.e_new;
    rec.energy = s.energy;
    rec.grad_norm = std::sqrt(s.grad_norm2);
    return out;
  }
  rec.at_boundary = a.ls.at_boundary;

  SolverState next = SolverState::at(ctx, cfg, a.u_new, s.iter + 1, &s);
  next.has_previous = true;
  next.d_prev = a.d;
  next.grad_prev = s.grad;
  next.grad_prev_norm2 = s.grad_norm2;
  next.ud_prev = a.descent;
  next.prev_interior = !a.ls.at_boundary;

  const Field transported = [&] {
    Field t(a.d);
    t.vec().noalias() -= ctx.l2_inner(a.d, next.u) * next.u.vec();
    return t;
  }();
  rec.orthogonality = next.eprime.dot(transported.vec());
  rec.energy = next.energy;
  rec.grad_norm = std::sqrt(next.grad_norm2);
  s = std::move(next);
  return out;
}

enum class SolveStatus { Converged, MaxIterations, Stagnated };

inline std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Converged: return "converged";
    case SolveStatus::MaxIterations: return "max-iterations";
    case SolveStatus::Stagnated: return "stagnated";
  }
  return "?";
}

struct SolveResult {
  Field u;
  SolveStatus status = SolveStatus::MaxIterations;
  int iterations = 0;
  double energy = 0.0;
  double lambda = 0.0;
  double grad_norm = 0.0;
  std::vector<IterationRecord> trace;
};

/// Runs the Riemannian conjugate Sobolev-gradient iteration from u0 (which
/// is normalized first) until the configured stop rule fires. The trace
/// holds the initial state as record 0 and one record per accepted step.
inline SolveResult solve_ground_state(const EnergyContext& ctx, const SolverConfig& cfg, const Field& u0,
                                      std::optional<double> reference_energy = std::nullopt) {
  cfg.validate();
  if (cfg.stop_rule == StopRule::Reference && !reference_energy)
    throw std::invalid_argument("solve_ground_state: reference stop rule needs a reference energy");

  SolverState s = SolverState::at(ctx, cfg, normalize(ctx, u0), 0);
  SolveResult res;
  auto error_of = [&](double e) {
    return reference_energy ? e - *reference_energy : std::numeric_limits<double>::quiet_NaN();
  };
  IterationRecord first;
  first.energy = s.energy;
  first.energy_error = error_of(s.energy);
  first.grad_norm = std::sqrt(s.grad_norm2);
  res.trace.push_back(first);

  auto reached = [&](double e_old, double e_new, double gnorm) {
    switch (cfg.stop_rule) {
      case StopRule::Consecutive: return e_old - e_new < cfg.consecutive_tol;
      case StopRule::Reference: return e_new - *reference_energy < cfg.reference_tol;
      case StopRule::Gradient: return gnorm < cfg.gradient_tol;
    }
    return false;
  };

  bool done = false;
  if (cfg.stop_rule == StopRule::Reference && reached(s.energy, s.energy, first.grad_norm)) done = true;
  if (cfg.stop_rule == StopRule::Gradient && reached(s.energy, s.energy, first.grad_norm)) done = true;
  if (s.grad_norm2 == 0.0) done = true;
  res.status = done ? SolveStatus::Converged : SolveStatus::MaxIterations;

  while (!done && s.iter < cfg.max_iter) {
    const double e_old = s.energy;
    StepResult r = step(ctx, cfg, s);
    if (r.outcome == StepOutcome::Stagnated) {
      // A stationary point under the consecutive rule: no admissible step
      // changes the energy by more than the tolerance.
      const bool flat = cfg.stop_rule == StopRule::Consecutive && std::isfinite(r.candidate_energy) &&
                        std::abs(e_old - r.candidate_energy) < cfg.consecutive_tol;
      res.status = flat ? SolveStatus::Converged : SolveStatus::Stagnated;
      done = true;
      break;
    }
    r.record.energy_error = error_of(r.record.energy);
    res.trace.push_back(r.record);
    if (reached(e_old, r.record.energy, r.record.grad_norm)) {
      res.status = SolveStatus::Converged;
      done = true;
    }
  }

  res.u = s.u;
  res.iterations = s.iter;
  res.energy = s.energy;
  res.lambda = lagrange_lambda(ctx, s.u);
  res.grad_norm = std::sqrt(s.grad_norm2);
  return res;
}

/// First trace index whose energy error is below tol, or -1.
inline int iterations_to(const std::vector<IterationRecord>& trace, double tol) {
  for (const auto& r : trace)
    if (r.energy_error < tol) return r.iter;
  return -1;
}

}  // namespace rcsg
