#pragma once

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>

#include "rcsg/energy.hpp"
#include "rcsg/field.hpp"
#include "rcsg/sparse.hpp"

namespace rcsg {

enum class MetricKind { H10, AU };

inline std::string to_string(MetricKind k) { return k == MetricKind::H10 ? "h10" : "au"; }

/// Raised when the tangent projection degenerates, which only happens when
/// the metric is not positive definite.
class DegenerateProjectionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LinearSolveOptions {
  double tol = 1e-10;
  int max_iter = 20000;
};

/// Inner product on H^1_0 used to define Sobolev gradients: either the plain
/// Dirichlet form K or the energy-adaptive form a_u = A0 + kappa D(u)
/// linearized at a fixed point u. An AU metric is tied to its linearization
/// point and must be rebuilt when that point moves.
class Metric {
 public:
  static Metric h10(const EnergyContext& ctx) {
    return Metric(MetricKind::H10, std::make_shared<SparseOperator>(ctx.stiffness()), std::nullopt);
  }
  static Metric au(const EnergyContext& ctx, const Field& linearization_point) {
    return Metric(MetricKind::AU, std::make_shared<SparseOperator>(au_operator(ctx, linearization_point)),
                  linearization_point);
  }
  static Metric make(MetricKind kind, const EnergyContext& ctx, const Field& u) {
    return kind == MetricKind::H10 ? h10(ctx) : au(ctx, u);
  }

  MetricKind kind() const { return kind_; }
  const SparseOperator& op() const { return *op_; }
  const std::optional<Field>& linearization_point() const { return point_; }

  double inner(const Field& v, const Field& w) const { return op_->form(v.vec(), w.vec()); }
  double norm2(const Field& v) const { return inner(v, v); }

 private:
  Metric(MetricKind kind, std::shared_ptr<const SparseOperator> op, std::optional<Field> point)
      : kind_(kind), op_(std::move(op)), point_(std::move(point)) {}

  MetricKind kind_;
  std::shared_ptr<const SparseOperator> op_;
  std::optional<Field> point_;
};

/// Riesz representative R with (R, w)_X = (v, w)_{L2}: solves X R = M v.
inline Field riesz(const Metric& metric, const EnergyContext& ctx, const Field& v,
                   const LinearSolveOptions& opts = {}, const Field* warm_start = nullptr) {
  const Vector rhs = ctx.mass().apply(v.vec());
  const Vector* x0 = warm_start ? &warm_start->vec() : nullptr;
  return Field(solve_spd(metric.op(), rhs, opts.tol, opts.max_iter, x0));
}

/// X-orthogonal projection onto the tangent space at u,
///   P(v) = v - R_X(u) / ||R_X(u)||_X^2 * (u, v)_{L2}.
/// Construction performs the single Riesz solve for u; projections are free
/// afterwards. This is the per-iterate cache of R_X(u).
class TangentProjector {
 public:
  TangentProjector(const Metric& metric, const EnergyContext& ctx, const Field& u, const LinearSolveOptions& opts = {},
                   const Field* warm_start = nullptr)
      : ctx_(&ctx), u_(u), riesz_u_(riesz(metric, ctx, u, opts, warm_start)) {
    // ||R_X(u)||_X^2 = (u, R_X(u))_{L2} by the defining relation.
    riesz_norm2_ = ctx.l2_inner(u_, riesz_u_);
    if (!(riesz_norm2_ > 1e-14)) {
      throw DegenerateProjectionError("tangent projection: (u, R_X(u))_L2 = " + std::to_string(riesz_norm2_) +
                                      " is not positive; metric is not positive definite");
    }
  }

  Field project(const Field& v) const {
    const double c = ctx_->l2_inner(u_, v) / riesz_norm2_;
    Field r(v);
    r.vec().noalias() -= c * riesz_u_.vec();
    return r;
  }

  const Field& point() const { return u_; }
  const Field& riesz_of_point() const { return riesz_u_; }
  double riesz_norm2() const { return riesz_norm2_; }

 private:
  const EnergyContext* ctx_;
  Field u_;
  Field riesz_u_;
  double riesz_norm2_ = 0.0;
};

inline Field project_tangent(const Metric& metric, const EnergyContext& ctx, const Field& u, const Field& v,
                             const LinearSolveOptions& opts = {}) {
  return TangentProjector(metric, ctx, u, opts).project(v);
}

/// Sobolev gradient: for H10 u + R_{H10}(V u - Omega L3 u + kappa |u|^2 u)
/// (one Laplace solve); for AU at its own linearization point simply u.
inline Field sobolev_gradient(const Metric& metric, const EnergyContext& ctx, const Field& u,
                              const LinearSolveOptions& opts = {}, const Field* warm_start = nullptr) {
  if (metric.kind() == MetricKind::AU) return u;
  const auto& ops = ctx.operators();
  Vector load = ops.potential.apply(u.vec()) + ops.rotation.apply(u.vec());
  if (ctx.kappa() != 0.0) load += ctx.kappa() * apply_density_mass(ctx.mesh(), u, u);
  Vector x0;
  const Vector* x0p = nullptr;
  if (warm_start) {
    x0 = warm_start->vec() - u.vec();
    x0p = &x0;
  }
  Vector q = solve_spd(metric.op(), load, opts.tol, opts.max_iter, x0p);
  return Field(Vector(u.vec() + q));
}

/// Riemannian Sobolev gradient P_{u,X}(grad_X E(u)). For AU this is P(u),
/// i.e. u - R(u) / (u, R(u))_{L2} on the sphere, needing only the projector's
/// solve. Keeping the factor (u, u)_{L2} makes g tangent to rounding even when
/// ||u|| - 1 is a few ulps.
inline Field riemannian_gradient(const Metric& metric, const EnergyContext& ctx, const TangentProjector& proj,
                                 const LinearSolveOptions& opts = {}, const Field* warm_start = nullptr) {
  const Field& u = proj.point();
  if (metric.kind() == MetricKind::AU) return proj.project(u);
  return proj.project(sobolev_gradient(metric, ctx, u, opts, warm_start));
}

inline Field riemannian_gradient(const Metric& metric, const EnergyContext& ctx, const Field& u,
                                 const LinearSolveOptions& opts = {}) {
  TangentProjector proj(metric, ctx, u, opts);
  return riemannian_gradient(metric, ctx, proj, opts);
}

}  // namespace rcsg
