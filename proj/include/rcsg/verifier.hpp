#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "rcsg/energy.hpp"
#include "rcsg/field.hpp"
#include "rcsg/sparse.hpp"

namespace rcsg {

namespace detail {

using ColMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

inline ColMatrix to_col_major(const SparseOperator& a) { return ColMatrix(a.matrix()); }

}  // namespace detail

/// Dual norm of E'(u) - lambda M u with respect to a_u: the a_u-norm of its
/// Riesz representative, computed with a sparse Cholesky factorization.
inline double gpevp_residual(const EnergyContext& ctx, const Field& u, double lambda) {
  const Vector r = eprime(ctx, u) - lambda * ctx.mass().apply(u.vec());
  Eigen::SimplicialLLT<detail::ColMatrix> llt(detail::to_col_major(au_operator(ctx, u)));
  if (llt.info() != Eigen::Success) throw std::runtime_error("gpevp_residual: a_u is not positive definite");
  const Vector z = llt.solve(r);
  return std::sqrt(std::max(0.0, z.dot(r)));
}

struct SpectrumOptions {
  int k = 7;
  /// Block size is k + extra.
  int extra = 2;
  /// Stop once every wanted Ritz pair has relative residual below this.
  double tol = 1e-9;
  int max_iter = 2000;
  std::uint64_t seed = 20240917;
};

struct TangentSpectrum {
  std::vector<double> values;  // ascending
  std::vector<Field> vectors;  // L2-normalized, tangent at u
  std::vector<double> residuals;
  bool converged = false;
  int iterations = 0;
  double shift = 0.0;
};

/// Number of eigenvalues below sigma of E''(u) restricted to the L2-orthogonal
/// complement of u, together with the factorization used to count them.
class ShiftedTangentSolver {
 public:
  ShiftedTangentSolver(const detail::ColMatrix& h, const detail::ColMatrix& m, const Vector& w, double sigma)
      : w_(w) {
    detail::ColMatrix a = h - sigma * m;
    ldlt_.compute(a);
    ok_ = ldlt_.info() == Eigen::Success;
    if (!ok_) return;
    y0_ = ldlt_.solve(w_);
    s_ = w_.dot(y0_);
    const Vector& d = ldlt_.vectorD();
    int neg = 0;
    for (Eigen::Index i = 0; i < d.size(); ++i) {
      if (d[i] == 0.0 || !std::isfinite(d[i])) {
        ok_ = false;
        return;
      }
      if (d[i] < 0.0) ++neg;
    }
    // Haynsworth inertia of the bordered system [[A, w], [w^T, 0]].
    count_ = neg - (s_ < 0.0 ? 1 : 0);
    ok_ = s_ != 0.0 && std::isfinite(s_);
  }

  bool ok() const { return ok_; }
  int count_below() const { return count_; }

  /// x with (H - sigma M) x - b in span{w} and w^T x = 0.
  Vector solve(const Vector& b) const {
    Vector y = ldlt_.solve(b);
    y.noalias() -= (w_.dot(y) / s_) * y0_;
    return y;
  }

 private:
  Vector w_;
  Eigen::SimplicialLDLT<detail::ColMatrix> ldlt_;
  Vector y0_;
  double s_ = 0.0;
  int count_ = 0;
  bool ok_ = false;
};

/// The k smallest eigenpairs of <E''(u) v, w> = mu (v, w)_{L2} over v, w
/// tangent at u. Shift-and-invert subspace iteration with a Rayleigh-Ritz
/// step per sweep; the shift is lowered below lambda = <E'(u), u> until the
/// inertia count confirms no tangent eigenvalue lies beneath it.
inline TangentSpectrum tangent_hessian_spectrum(const EnergyContext& ctx, const Field& u,
                                                const SpectrumOptions& opts = {}) {
  if (opts.k < 1) throw std::invalid_argument("tangent_hessian_spectrum: k must be positive");
  const detail::ColMatrix h = detail::to_col_major(hessian_operator(ctx, u));
  const detail::ColMatrix m = detail::to_col_major(ctx.mass());
  const Eigen::Index dim = h.rows();
  const int p = std::min<int>(opts.k + opts.extra, static_cast<int>(dim) - 1);
  const int k = std::min(opts.k, p);
  const Vector w = m * u.vec();
  const double unorm2 = u.vec().dot(w);

  const double lambda = lagrange_lambda(ctx, u);
  double delta = std::max(1e-3 * std::abs(lambda), 1e-3);
  double sigma = lambda - delta;
  std::unique_ptr<ShiftedTangentSolver> solver;
  for (int tries = 0; tries < 80; ++tries) {
    auto candidate = std::make_unique<ShiftedTangentSolver>(h, m, w, sigma);
    if (candidate->ok() && candidate->count_below() == 0) {
      solver = std::move(candidate);
      break;
    }
    sigma -= delta;
    delta *= 2.0;
  }
  if (!solver) throw std::runtime_error("tangent_hessian_spectrum: no admissible shift found");

  Eigen::SimplicialLLT<detail::ColMatrix> mass_llt(m);
  auto project = [&](Vector& v) { v.noalias() -= (w.dot(v) / unorm2) * u.vec(); };

  Eigen::MatrixXd x(dim, p);
  x.col(0) = u.times_i().vec();
  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> normal;
  for (int j = 1; j < p; ++j)
    for (Eigen::Index i = 0; i < dim; ++i) x(i, j) = normal(rng);

  TangentSpectrum out;
  out.shift = sigma;
  Eigen::MatrixXd y(dim, p), hy(dim, p), my(dim, p);
  Eigen::VectorXd theta;
  std::vector<double> res(k, 0.0);
  for (int it = 1; it <= opts.max_iter; ++it) {
    for (int j = 0; j < p; ++j) {
      Vector col = x.col(j);
      project(col);
      Vector yj = solver->solve(m * col);
      project(yj);
      const double nrm = std::sqrt(yj.dot(m * yj));
      y.col(j) = yj / nrm;
    }
    for (int j = 0; j < p; ++j) {
      hy.col(j) = h * y.col(j);
      my.col(j) = m * y.col(j);
    }
    Eigen::MatrixXd hs = y.transpose() * hy;
    Eigen::MatrixXd ms = y.transpose() * my;
    hs = 0.5 * (hs + hs.transpose()).eval();
    ms = 0.5 * (ms + ms.transpose()).eval();
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(hs, ms);
    if (ges.info() != Eigen::Success) throw std::runtime_error("tangent_hessian_spectrum: Rayleigh-Ritz failed");
    theta = ges.eigenvalues();
    const Eigen::MatrixXd& c = ges.eigenvectors();
    x = y * c;
    const Eigen::MatrixXd hx = hy * c, mx = my * c;

    bool all = true;
    for (int j = 0; j < k; ++j) {
      Vector r = hx.col(j) - theta[j] * mx.col(j);
      r.noalias() -= (u.vec().dot(r) / unorm2) * w;
      const double rn = std::sqrt(std::max(0.0, r.dot(mass_llt.solve(r))));
      res[j] = rn / std::max(1.0, std::abs(theta[j]));
      if (!(res[j] <= opts.tol)) all = false;
    }
    out.iterations = it;
    if (all) {
      out.converged = true;
      break;
    }
  }

  for (int j = 0; j < k; ++j) {
    Vector v = x.col(j);
    project(v);
    v /= std::sqrt(v.dot(m * v));
    out.values.push_back(theta[j]);
    out.vectors.emplace_back(std::move(v));
    out.residuals.push_back(res[j]);
  }
  return out;
}

enum class Verdict { LocalMinimizer, SaddlePoint, Inconclusive };

inline std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::LocalMinimizer: return "local-minimizer";
    case Verdict::SaddlePoint: return "saddle-point";
    case Verdict::Inconclusive: return "inconclusive";
  }
  return "?";
}

struct CertifyOptions {
  SpectrumOptions spectrum{};
  double gap_tol = 1e-7;
  double residual_tol = 1e-6;
  double alignment_tol = 0.99;
  /// |lambda_1 - lambda| allowed for "lambda_1 = lambda", relative to max(1, |lambda|).
  double lambda_match_tol = 1e-6;
};

struct Certificate {
  double energy = 0.0;
  double lambda = 0.0;
  double residual_norm = 0.0;
  std::vector<double> spectrum;
  std::vector<double> spectrum_residuals;
  double alignment = 0.0;
  Verdict verdict = Verdict::Inconclusive;
  std::string reason;
  bool spectrum_converged = false;
};

/// First- and second-order optimality evidence for a normalized state u.
inline Certificate certify(const EnergyContext& ctx, const Field& u, const CertifyOptions& opts = {}) {
  Certificate c;
  c.energy = energy(ctx, u);
  c.lambda = lagrange_lambda(ctx, u);
  c.residual_norm = gpevp_residual(ctx, u, c.lambda);
  if (!(c.residual_norm <= opts.residual_tol)) {
    c.verdict = Verdict::Inconclusive;
    c.reason = "not stationary: GPEVP residual " + std::to_string(c.residual_norm) + " exceeds " +
               std::to_string(opts.residual_tol);
    return c;
  }

  const TangentSpectrum sp = tangent_hessian_spectrum(ctx, u, opts.spectrum);
  c.spectrum = sp.values;
  c.spectrum_residuals = sp.residuals;
  c.spectrum_converged = sp.converged;
  const Field iu = u.times_i();
  if (!sp.vectors.empty()) c.alignment = std::abs(ctx.l2_inner(sp.vectors.front(), iu)) / ctx.l2_norm(iu);

  const double match = opts.lambda_match_tol * std::max(1.0, std::abs(c.lambda));
  if (!sp.converged) {
    c.verdict = Verdict::Inconclusive;
    c.reason = "eigensolver did not converge";
  } else if (sp.values.size() < 2) {
    c.verdict = Verdict::Inconclusive;
    c.reason = "need at least two eigenvalues";
  } else if (sp.values[0] < c.lambda - opts.gap_tol) {
    c.verdict = Verdict::SaddlePoint;
    c.reason = "tangent Hessian eigenvalue below lambda";
  } else if (c.alignment < opts.alignment_tol) {
    c.verdict = Verdict::SaddlePoint;
    c.reason = "lowest eigenfunction is not aligned with i*u";
  } else if (!(sp.values[1] - sp.values[0] > opts.gap_tol)) {
    c.verdict = Verdict::Inconclusive;
    c.reason = "lambda_1 is not separated from lambda_2";
  } else if (std::abs(sp.values[0] - c.lambda) > match) {
    c.verdict = Verdict::Inconclusive;
    c.reason = "lambda_1 does not match lambda";
  } else {
    c.verdict = Verdict::LocalMinimizer;
    c.reason = "lambda_1 = lambda is simple with eigenfunction i*u";
  }
  return c;
}

}  // namespace rcsg
