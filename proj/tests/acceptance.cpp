// Acceptance checks. Each criterion prints one line
//   criterion N: PASS|FAIL|SKIP <title>: <measured values>
// and exits 0 on pass, 1 on failure, 77 when skipped.

#include <Eigen/Dense>
#include <Eigen/SparseLU>

#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>

#include "test_support.hpp"

using namespace rcsg;
using namespace rcsg::testing;
namespace fs = std::filesystem;

namespace {

constexpr int kSkip = 77;

struct Outcome {
  bool pass = false;
  std::string detail;
  bool skipped = false;
};

std::string sci(double x) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << x;
  return os.str();
}

std::string fixed(double x, int digits = 9) {
  std::ostringstream os;
  os.precision(digits);
  os << std::fixed << x;
  return os.str();
}

/// Artifacts shared between criteria (internal references) live here.
fs::path cache_dir() {
  if (const char* env = std::getenv("RCSG_ACCEPTANCE_DIR")) return env;
  return fs::current_path() / "acceptance_runs";
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

const LinearSolveOptions kTight{1e-12, 50000};

// ---------------------------------------------------------------------------

Outcome derivative_consistency() {
  const auto ctx = make_ctx(exp1_physics(), 32);
  std::mt19937_64 rng(101);
  const double t = 1e-5;
  double worst_first = 0.0, worst_second = 0.0;
  for (int i = 0; i < 20; ++i) {
    const Field u = smooth_unit_field(rng, *ctx);
    const Field v = smooth_unit_field(rng, *ctx);
    const Field w = smooth_unit_field(rng, *ctx);
    const double fd1 = (energy(*ctx, u + t * v) - energy(*ctx, u - t * v)) / (2 * t);
    worst_first = std::max(worst_first, rel_diff(fd1, eprime(*ctx, u).dot(v.vec())));
    const double fd2 = (eprime(*ctx, u + t * v) - eprime(*ctx, u - t * v)).dot(w.vec()) / (2 * t);
    worst_second = std::max(worst_second, rel_diff(fd2, eprimeprime_apply(*ctx, u, v).dot(w.vec())));
  }
  const bool pass = worst_first <= 1e-5 && worst_second <= 1e-5;
  return {pass, "max rel err E' " + sci(worst_first) + ", E'' " + sci(worst_second) + " (tol 1e-5)"};
}

Outcome algebraic_identities() {
  const auto ctx = make_ctx(exp1_physics(), 32);
  std::mt19937_64 rng(102);
  double worst_lambda = 0.0, worst_form = 0.0, worst_phase_ulps = 0.0;
  for (int i = 0; i < 20; ++i) {
    const Field u = i % 2 ? random_unit_field(rng, *ctx) : smooth_unit_field(rng, *ctx);
    const double lhs = lagrange_lambda(*ctx, u);
    const double rhs = 2 * energy(*ctx, u) + 0.5 * ctx->kappa() * l4_norm4(ctx->mesh(), u);
    worst_lambda = std::max(worst_lambda, rel_diff(lhs, rhs));

    const SparseOperator a = au_operator(*ctx, u);
    const Vector g = eprime(*ctx, u);
    const Field w = random_field(rng, ctx->num_dofs());
    worst_form = std::max(worst_form, rel_diff(a.form(u.vec(), w.vec()), g.dot(w.vec())));

    const double e = energy(*ctx, u);
    const double ulp = std::nextafter(e, std::numeric_limits<double>::infinity()) - e;
    worst_phase_ulps = std::max(worst_phase_ulps, std::abs(energy(*ctx, u.times_i()) - e) / ulp);
  }
  const bool pass = worst_lambda <= 1e-12 && worst_form <= 1e-12 && worst_phase_ulps <= 2.0;
  return {pass, "lambda identity " + sci(worst_lambda) + ", a_u(u,w) vs E'(u)w " + sci(worst_form) +
                    ", |E(iu)-E(u)| " + fixed(worst_phase_ulps, 1) + " ulp"};
}

/// X-orthogonal projection from the bordered system
///   [X  Mu] [p]   [Xv]
///   [uM  0] [mu] = [0 ]
/// solved by sparse LU, independent of the Riesz-representer closed form.
Vector bordered_projection(const Metric& metric, const EnergyContext& ctx, const Field& u, const Field& v) {
  const auto& x = metric.op().matrix();
  const Vector mu = ctx.mass().apply(u.vec());
  const Eigen::Index n = x.rows();
  std::vector<Eigen::Triplet<double>> trips;
  for (int k = 0; k < x.outerSize(); ++k)
    for (typename std::decay_t<decltype(x)>::InnerIterator it(x, k); it; ++it)
      trips.emplace_back(it.row(), it.col(), it.value());
  for (Eigen::Index i = 0; i < n; ++i) {
    if (mu[i] == 0.0) continue;
    trips.emplace_back(i, n, mu[i]);
    trips.emplace_back(n, i, mu[i]);
  }
  Eigen::SparseMatrix<double> k(n + 1, n + 1);
  k.setFromTriplets(trips.begin(), trips.end());
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(k);
  Vector rhs = Vector::Zero(n + 1);
  rhs.head(n) = metric.op().apply(v.vec());
  return lu.solve(rhs).head(n);
}

Outcome projection_suite() {
  const auto ctx = make_ctx(exp1_physics(), 32);
  std::ostringstream detail;
  bool pass = true;
  for (MetricKind kind : {MetricKind::H10, MetricKind::AU}) {
    std::mt19937_64 rng(103);
    const Field u = smooth_unit_field(rng, *ctx);
    const Metric metric = Metric::make(kind, *ctx, u);
    const TangentProjector proj(metric, *ctx, u, kTight);
    double tangency = 0.0, idempotence = 0.0, orthogonality = 0.0, closed_form = 0.0;
    for (int i = 0; i < 5; ++i) {
      const Field v = random_field(rng, ctx->num_dofs());
      const Field pv = proj.project(v);
      tangency = std::max(tangency, std::abs(ctx->l2_inner(u, pv)) / ctx->l2_norm(v));
      idempotence = std::max(idempotence, (proj.project(pv).vec() - pv.vec()).norm() / pv.vec().norm());
      const Field w = random_tangent(rng, *ctx, u);
      orthogonality = std::max(orthogonality, std::abs(metric.inner(v - pv, w)) /
                                                  std::sqrt(metric.norm2(v) * metric.norm2(w)));
      const Vector p = bordered_projection(metric, *ctx, u, v);
      closed_form = std::max(closed_form, (p - pv.vec()).norm() / p.norm());
    }
    const double worst = std::max({tangency, idempotence, orthogonality, closed_form});
    pass = pass && worst <= 1e-9;
    detail << to_string(kind) << " [tangency " << sci(tangency) << ", idempotence " << sci(idempotence)
           << ", X-orthogonality " << sci(orthogonality) << ", closed form vs bordered " << sci(closed_form) << "] ";
  }
  return {pass, detail.str() + "(tol 1e-9)"};
}

std::shared_ptr<const EnergyContext> laplace_ctx(int n) {
  const Physics free{1.0, 1.0, 0.0, 0.0, 1.0};
  return std::make_shared<const EnergyContext>(std::make_shared<const Mesh>(build_mesh(1.0, n)), free,
                                               [](double, double) { return 0.0; });
}

Field positive_start(const EnergyContext& ctx) {
  return normalize(ctx, interpolate(ctx.mesh(), [](double x, double y) {
                     return std::complex<double>((1 - x * x) * (1 - y * y) * (1 + 0.3 * x), 0.2 * x * y);
                   }));
}

Outcome linear_oracle() {
  SolverConfig cfg;
  cfg.linear.tol = 1e-12;

  const auto small = laplace_ctx(8);
  const int n = small->num_dofs();
  const Eigen::MatrixXd k = Eigen::MatrixXd(small->stiffness().matrix()).topLeftCorner(n, n);
  const Eigen::MatrixXd m = Eigen::MatrixXd(small->mass().matrix()).topLeftCorner(n, n);
  const Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(k, m);
  const double mu = es.eigenvalues()[0];
  double dense_err = 0.0;
  for (MetricKind metric : {MetricKind::AU, MetricKind::H10}) {
    cfg.metric = metric;
    const SolveResult r = solve_ground_state(*small, cfg, positive_start(*small));
    if (r.status != SolveStatus::Converged) return {false, "n=8 solve did not converge (" + to_string(metric) + ")"};
    dense_err = std::max({dense_err, rel_diff(r.energy, 0.5 * mu), rel_diff(r.lambda, mu)});
  }

  cfg.metric = MetricKind::AU;
  const double exact = std::numbers::pi * std::numbers::pi / 4.0;
  std::vector<double> err;
  for (int size : {16, 32, 64}) {
    const auto ctx = laplace_ctx(size);
    const SolveResult r = solve_ground_state(*ctx, cfg, positive_start(*ctx));
    if (r.status != SolveStatus::Converged) return {false, "n=" + std::to_string(size) + " solve did not converge"};
    err.push_back(r.energy - exact);
  }
  const double rate1 = std::log2(err[0] / err[1]), rate2 = std::log2(err[1] / err[2]);
  const bool pass = dense_err <= 1e-10 && std::abs(rate1 - 2.0) <= 0.2 && std::abs(rate2 - 2.0) <= 0.2 &&
                    err[2] > 0.0 && err[2] < err[1];
  return {pass, "dense n=8 rel err " + sci(dense_err) + " (tol 1e-10); E(64)-pi^2/4 = " + sci(err[2]) +
                    "; observed rates " + fixed(rate1, 3) + ", " + fixed(rate2, 3) + " (2.0 +- 0.2)"};
}

Outcome descent_guarantees() {
  const RunConfig base = preset_config("exp1-coarse");
  const auto ctx = make_context(base);
  const Field u0 = initial_state(base.initial, base.physics, *ctx);
  constexpr int kSteps = 400;
  std::ostringstream detail;
  bool pass = true;
  for (MomentumKind kind : {MomentumKind::ZERO, MomentumKind::DY, MomentumKind::FR, MomentumKind::PR,
                            MomentumKind::HS}) {
    SolverConfig cfg = base.solver;
    cfg.momentum = kind;
    // The identity also needs a_u(R(u), w) = (u, w), so solve R(u) tightly.
    cfg.linear.tol = 1e-12;
    SolverState s = SolverState::at(*ctx, cfg, u0, 0);
    int steps = 0, non_descent = 0, increases = 0, closed_checked = 0, closed_violations = 0, fallbacks = 0;
    double closed_err = 0.0;
    for (; steps < kSteps; ++steps) {
      const double e_old = s.energy;
      // The derivation takes g tangent; its computed defect (u, g) is a few
      // eps and enters the identity as (u, g) / (u, R(u)).
      const double defect = std::abs(ctx->l2_inner(s.u, s.grad)) / s.projector.riesz_norm2();
      const StepResult r = step(*ctx, cfg, s);
      if (r.outcome != StepOutcome::Advanced) break;
      const IterationRecord& rec = r.record;
      if (rec.fallback) ++fallbacks;
      if (!rec.fallback && !(rec.descent < 0.0)) ++non_descent;
      if (rec.energy > e_old) ++increases;
      if (kind == MomentumKind::DY) {
        if (!(rec.momentum_descent < 0.0)) ++non_descent;
        if (rec.closed_form_valid) {
          const double diff = std::abs(rec.descent - rec.descent_closed);
          closed_err = std::max(closed_err, rel_diff(rec.descent, rec.descent_closed));
          if (diff > 1e-9 * std::abs(rec.descent) + 2 * defect) ++closed_violations;
          ++closed_checked;
        }
      }
    }
    bool ok = non_descent == 0 && increases == 0 && steps > 0;
    if (kind == MomentumKind::DY) ok = ok && closed_checked > 0 && closed_violations == 0;
    pass = pass && ok;
    detail << to_string(kind) << "[" << steps << " steps, " << fallbacks << " fallback, " << non_descent
           << " non-descent, " << increases << " increases";
    if (kind == MomentumKind::DY) detail << ", closed form max rel " << sci(closed_err) << ", " << closed_violations << " of " << closed_checked
             << " beyond 1e-9 rel + tangency defect";
    detail << "] ";
  }
  return {pass, detail.str()};
}

/// Iterations to 1e-9 with DNF mapped to infinity.
double count_of(const Comparison& c, MetricKind metric, MomentumKind momentum) {
  for (const auto& r : c.rows)
    if (r.method.metric == metric && r.method.momentum == momentum)
      return r.iterations >= 0 ? r.iterations : std::numeric_limits<double>::infinity();
  return std::numeric_limits<double>::quiet_NaN();
}

std::string count_text(double x) { return std::isfinite(x) ? std::to_string(static_cast<long>(x)) : "DNF"; }

/// Budget for comparison runs; methods that do not reach 1e-9 within it are DNF.
constexpr int kComparisonBudget = 60000;

Comparison comparison_for(const std::string& preset, const std::vector<Method>& methods) {
  RunConfig base = preset_config(preset);
  base.solver.max_iter = kComparisonBudget;
  return compare_methods(base, methods, cache_dir() / preset);
}

Outcome method_ordering() {
  std::ostringstream detail;
  bool pass = true;
  const std::vector<Method> methods = parse_methods("pr,hs,fr,dy,zero");
  for (const std::string preset : {"exp1-coarse", "exp2-coarse"}) {
    const Comparison c = comparison_for(preset, methods);
    const double pr = count_of(c, MetricKind::AU, MomentumKind::PR), hs = count_of(c, MetricKind::AU, MomentumKind::HS);
    const double fr = count_of(c, MetricKind::AU, MomentumKind::FR), dy = count_of(c, MetricKind::AU, MomentumKind::DY);
    const double zero = count_of(c, MetricKind::AU, MomentumKind::ZERO);
    const bool a = std::isfinite(pr) && pr <= 1.5 * hs, b = std::isfinite(hs) && hs <= fr, d = std::isfinite(hs) && hs <= dy;
    const bool z = std::isfinite(pr) && zero >= 2.0 * pr;
    pass = pass && a && b && d && z;
    detail << preset << "[PR " << count_text(pr) << ", HS " << count_text(hs) << ", FR " << count_text(fr) << ", DY "
           << count_text(dy) << ", ZERO " << count_text(zero) << "; PR<=1.5HS " << (a ? "ok" : "no") << ", HS<=FR "
           << (b ? "ok" : "no") << ", HS<=DY " << (d ? "ok" : "no") << ", ZERO>=2PR " << (z ? "ok" : "no") << "] ";
  }
  return {pass, detail.str()};
}

Outcome metric_comparison() {
  const Comparison c = comparison_for("exp2-coarse", parse_methods("au:pr,h10:pr"));
  const double au = count_of(c, MetricKind::AU, MomentumKind::PR), h10 = count_of(c, MetricKind::H10, MomentumKind::PR);
  return {std::isfinite(au) && au < h10, "exp2-coarse PR iterations to 1e-9: a_u " + count_text(au) + ", H10 " +
                                             count_text(h10)};
}

Outcome full_scale_reference() {
  if (!std::getenv("RCSG_FULL_SCALE")) return {true, "set RCSG_FULL_SCALE=1 to run (hours)", true};
  struct Target {
    const char* preset;
    double energy, lambda;
    std::array<double, 7> spectrum;
  };
  const Target targets[] = {
      {"exp1", 7.168961589, 20.516919568,
       {20.516919568, 20.517228100, 20.532064567, 20.533525438, 20.600099691, 20.614077863, 20.621639553}},
      {"exp2", 3.886043618, 10.994845147,
       {10.994845147, 10.996312407, 10.999259973, 10.999977264, 11.007689478, 11.017599133, 11.023446235}},
  };
  std::ostringstream detail;
  bool pass = true;
  for (const Target& t : targets) {
    RunConfig cfg = reference_config(preset_config(t.preset));
    cfg.solver.max_iter = 1000000;
    cfg.output_dir = (cache_dir() / (std::string(t.preset) + "-full")).string();
    const RunOutcome r = run_experiment(cfg);
    double dev = std::numeric_limits<double>::infinity();
    if (r.certificate && r.certificate->spectrum.size() >= 7) {
      dev = 0.0;
      for (int i = 0; i < 7; ++i) dev = std::max(dev, std::abs(r.certificate->spectrum[i] - t.spectrum[i]));
    }
    const double e_err = rel_diff(r.solve.energy, t.energy), l_err = rel_diff(r.solve.lambda, t.lambda);
    pass = pass && e_err <= 1e-4 && l_err <= 1e-4 && dev <= 1e-3;
    detail << t.preset << "[E " << fixed(r.solve.energy) << " (rel " << sci(e_err) << "), lambda "
           << fixed(r.solve.lambda) << " (rel " << sci(l_err) << "), spectrum max dev " << sci(dev) << "] ";
  }
  return {pass, detail.str()};
}

Outcome certification() {
  // Converged exp1-coarse state: the internal reference, computed here if
  // the ordering criterion has not left one behind.
  const RunConfig base = preset_config("exp1-coarse");
  const auto ctx = make_context(base);
  const fs::path ref_state = cache_dir() / "exp1-coarse" / "reference" / "state.gpstate";
  Field u;
  if (fs::exists(ref_state)) {
    u = load_state(ref_state).u;
  } else {
    RunConfig rc = reference_config(base);
    rc.solver.max_iter = kComparisonBudget;
    rc.output_dir = ref_state.parent_path().string();
    rc.certify = false;
    u = run_experiment(rc, ctx).solve.u;
  }
  const Certificate c = certify(*ctx, u);
  const bool minimizer = c.verdict == Verdict::LocalMinimizer && c.alignment >= 0.999 && c.residual_norm <= 1e-6;

  // Linear problem (kappa = 0): the dense oracle gives every excited state.
  Physics lin = exp1_physics();
  lin.kappa = 0.0;
  const auto small = make_ctx(lin, 16);
  const Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(small->linear_part().matrix()),
                                                                     Eigen::MatrixXd(small->mass().matrix()));
  auto mode = [&](int j) { return normalize(*small, Field(Vector(es.eigenvectors().col(j)))); };
  // The real form doubles every eigenvalue; column 2 is the first excited state.
  const Field v0 = mode(0), v2 = mode(2);
  const Certificate ground = certify(*small, v0);
  const Certificate perturbed = certify(*small, normalize(*small, v0 + 0.1 * v2));
  const Certificate excited = certify(*small, v2);
  const bool saddle = ground.verdict == Verdict::LocalMinimizer && perturbed.verdict != Verdict::LocalMinimizer &&
                      excited.verdict == Verdict::SaddlePoint && !excited.spectrum.empty() &&
                      excited.spectrum.front() < excited.lambda;

  return {minimizer && saddle,
          "exp1-coarse verdict " + to_string(c.verdict) + ", alignment " + fixed(c.alignment, 6) + " (>= 0.999), residual " +
              sci(c.residual_norm) + " (<= 1e-6); linear ground " + to_string(ground.verdict) + ", perturbed " +
              to_string(perturbed.verdict) + ", excited " + to_string(excited.verdict) +
              (excited.spectrum.empty() ? std::string()
                                        : " (lambda_1 " + fixed(excited.spectrum.front(), 6) + " < lambda " +
                                              fixed(excited.lambda, 6) + ")")};
}

Outcome determinism() {
  const fs::path dir = cache_dir() / "determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  RunConfig cfg = preset_config("exp1-coarse");
  cfg.solver.consecutive_tol = 1e-9;
  cfg.certify = false;
  std::ofstream(dir / "run.cfg") << format_config(cfg);
  std::string files[2][2];
  for (int i = 0; i < 2; ++i) {
    const fs::path out = dir / ("run" + std::to_string(i));
    const std::string cmd =
        std::string(RCSG_CLI_PATH) + " run --config " + (dir / "run.cfg").string() + " --out " + out.string() + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0)
      return {false, "run " + std::to_string(i) + " exited with status " + std::to_string(WEXITSTATUS(status))};
    files[i][0] = slurp(out / "trace.csv");
    files[i][1] = slurp(out / "state.gpstate");
  }
  const bool trace_same = !files[0][0].empty() && files[0][0] == files[1][0];
  const bool state_same = !files[0][1].empty() && files[0][1] == files[1][1];
  return {trace_same && state_same, std::string("trace.csv ") + (trace_same ? "identical" : "differs") + " (" +
                                        std::to_string(files[0][0].size()) + " bytes), state.gpstate " +
                                        (state_same ? "identical" : "differs") + " (" +
                                        std::to_string(files[0][1].size()) + " bytes)"};
}

struct Criterion {
  const char* title;
  std::function<Outcome()> run;
};

const std::map<int, Criterion> kCriteria = {
    {1, {"derivative consistency", derivative_consistency}},
    {2, {"algebraic identities", algebraic_identities}},
    {3, {"projection and Riesz suite", projection_suite}},
    {4, {"linear-case oracle", linear_oracle}},
    {5, {"descent guarantees", descent_guarantees}},
    {6, {"method ordering", method_ordering}},
    {7, {"metric comparison", metric_comparison}},
    {8, {"full-scale reference values", full_scale_reference}},
    {9, {"certification behavior", certification}},
    {10, {"determinism", determinism}},
};

int run_criterion(int id) {
  const Criterion& c = kCriteria.at(id);
  Outcome o;
  try {
    o = c.run();
  } catch (const std::exception& e) {
    o = {false, std::string("error: ") + e.what()};
  }
  const char* tag = o.skipped ? "SKIP" : o.pass ? "PASS" : "FAIL";
  std::cout << "criterion " << id << ": " << tag << " " << c.title << ": " << o.detail << std::endl;
  return o.skipped ? kSkip : o.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> ids;
  app.add_option("--criterion", ids, "criterion number(s); all but the full-scale one by default")
      ->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);
  if (ids.empty()) ids = {1, 2, 3, 4, 5, 6, 7, 9, 10};
  int worst = 0;
  for (int id : ids) {
    const int rc = run_criterion(id);
    if (rc == 1 || (rc == kSkip && worst == 0)) worst = rc;
  }
  return worst;
}
