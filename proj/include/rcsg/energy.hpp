#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <sstream>
#include <string>

#include "rcsg/assembly.hpp"
#include "rcsg/field.hpp"
#include "rcsg/mesh.hpp"
#include "rcsg/sparse.hpp"

namespace rcsg {

/// Physical parameters of a rotating condensate in a harmonic trap
/// V(x,y) = (gamma_x^2 x^2 + gamma_y^2 y^2) / 2.
struct Physics {
  double gamma_x = 1.0;
  double gamma_y = 1.0;
  double omega = 0.0;
  double kappa = 0.0;
  double L = 1.0;

  double potential(double x, double y) const {
    return 0.5 * (gamma_x * gamma_x * x * x + gamma_y * gamma_y * y * y);
  }
  ScalarField potential_field() const {
    return [gx = gamma_x, gy = gamma_y](double x, double y) { return 0.5 * (gx * gx * x * x + gy * gy * y * y); };
  }
};

/// Outcome of the trap-versus-rotation balance check.
struct A1Report {
  bool satisfied = false;
  /// Largest epsilon with V - (1+eps)/4 Omega^2 r^2 >= 0 at every quadrature
  /// point; +infinity when Omega = 0.
  double epsilon = 0.0;
  Point witness{};
  std::string message;
};

/// Scans all quadrature points for V(x) - (1+eps)/4 Omega^2 (x^2+y^2) >= 0.
inline A1Report check_A1(const Mesh& mesh, const ScalarField& potential, double omega, double kappa = 0.0) {
  A1Report rep;
  if (kappa < 0.0) {
    rep.satisfied = false;
    rep.epsilon = -std::numeric_limits<double>::infinity();
    rep.message = "repulsion parameter kappa must be non-negative";
    return rep;
  }
  double eps = std::numeric_limits<double>::infinity();
  Point witness{};
  bool negative_potential = false;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& g = mesh.geometry[t];
    for (const auto& q : kGauss6) {
      const Point p = g.map(q.bary);
      const double v = potential(p.x, p.y);
      if (v < 0.0 && !negative_potential) {
        negative_potential = true;
        witness = p;
      }
      const double centrifugal = 0.25 * omega * omega * (p.x * p.x + p.y * p.y);
      if (centrifugal > 0.0) {
        const double e = v / centrifugal - 1.0;
        if (e < eps) {
          eps = e;
          if (!negative_potential) witness = p;
        }
      }
    }
  }
  rep.epsilon = eps;
  rep.witness = witness;
  rep.satisfied = !negative_potential && eps > 0.0;
  std::ostringstream os;
  if (negative_potential) {
    os << "trapping potential is negative at (" << witness.x << ", " << witness.y << ")";
  } else if (!rep.satisfied) {
    os << "rotation too fast for the trap: V - (1+eps)/4 Omega^2 r^2 >= 0 fails for every eps > 0 at ("
       << witness.x << ", " << witness.y << "), best eps = " << eps;
  } else {
    os << "ok, eps = " << eps;
  }
  rep.message = os.str();
  return rep;
}

inline A1Report check_A1(const Physics& physics, const Mesh& mesh) {
  return check_A1(mesh, physics.potential_field(), physics.omega, physics.kappa);
}

/// Immutable discretized energy: mesh, physics, assembled operators and the
/// u-independent part A0 = K + V + R of the energy-adaptive form.
class EnergyContext {
 public:
  EnergyContext(std::shared_ptr<const Mesh> mesh, const Physics& physics)
      : EnergyContext(std::move(mesh), physics, physics.potential_field()) {}

  EnergyContext(std::shared_ptr<const Mesh> mesh, const Physics& physics, const ScalarField& potential)
      : mesh_(std::move(mesh)), physics_(physics) {
    ops_ = assemble_operators(*mesh_, potential, physics_.omega);
    a0_ = ops_.stiffness + ops_.potential + ops_.rotation;
    split_linear_part();
  }

  const Mesh& mesh() const { return *mesh_; }
  std::shared_ptr<const Mesh> mesh_ptr() const { return mesh_; }
  const Physics& physics() const { return physics_; }
  double kappa() const { return physics_.kappa; }
  const OperatorSet& operators() const { return ops_; }
  const SparseOperator& mass() const { return ops_.mass; }
  const SparseOperator& stiffness() const { return ops_.stiffness; }
  const SparseOperator& linear_part() const { return a0_; }
  int num_dofs() const { return mesh_->num_dofs(); }

  double l2_inner(const Field& u, const Field& v) const { return rcsg::l2_inner(ops_.mass, u, v); }
  double l2_norm(const Field& u) const { return rcsg::l2_norm(ops_.mass, u); }

  /// u^T A0 u evaluated as re^T S re + im^T S im + 2 sum_{j<k} W_jk (im_j re_k - im_k re_j),
  /// where S is the diagonal block and W the antisymmetric lower-left block.
  /// Every product and sum maps onto itself under u -> i u, so the value is
  /// invariant under quarter-turn phase shifts to the last bit.
  double linear_quadratic_form(const Field& u) const {
    const Vector re = u.re(), im = u.im();
    const double sr = re.dot(block_.apply(re));
    const double si = im.dot(block_.apply(im));
    double c = 0.0;
    for (const auto& e : coupling_) c += e.w * (im[e.j] * re[e.k] - im[e.k] * re[e.j]);
    return (sr + si) + 2.0 * c;
  }

 private:
  struct Coupling {
    int j, k;
    double w;
  };

  void split_linear_part() {
    const int n = num_dofs();
    const CsrMatrix& a = a0_.matrix();
    std::vector<Triplet> diag;
    for (int r = 0; r < n; ++r) {
      for (CsrMatrix::InnerIterator it(a, r); it; ++it)
        if (it.col() < n) diag.emplace_back(r, static_cast<int>(it.col()), it.value());
    }
    for (int r = n; r < 2 * n; ++r) {
      for (CsrMatrix::InnerIterator it(a, r); it; ++it)
        if (it.col() < r - n) coupling_.push_back({r - n, static_cast<int>(it.col()), it.value()});
    }
    block_ = SparseOperator::from_triplets(n, diag, false);
  }

  std::shared_ptr<const Mesh> mesh_;
  Physics physics_;
  OperatorSet ops_;
  SparseOperator a0_;
  SparseOperator block_;
  std::vector<Coupling> coupling_;
};

/// E(u) = 1/2 u^T A0 u + kappa/4 int |u|^4.
inline double energy(const EnergyContext& ctx, const Field& u) {
  const double quadratic = ctx.linear_quadratic_form(u);
  const double quartic = ctx.kappa() != 0.0 ? l4_norm4(ctx.mesh(), u) : 0.0;
  return 0.5 * quadratic + 0.25 * ctx.kappa() * quartic;
}

/// Coefficients of <E'(u), .> = A0 u + kappa D(u) u.
inline Vector eprime(const EnergyContext& ctx, const Field& u) {
  Vector g = ctx.linear_part().apply(u.vec());
  if (ctx.kappa() != 0.0) g += ctx.kappa() * apply_density_mass(ctx.mesh(), u, u);
  return g;
}

/// Coefficients of <E''(u) v, .> = A0 v + kappa D(u) v + 2 kappa G(u) v.
inline Vector eprimeprime_apply(const EnergyContext& ctx, const Field& u, const Field& v) {
  Vector g = ctx.linear_part().apply(v.vec());
  if (ctx.kappa() != 0.0) {
    g += ctx.kappa() * apply_density_mass(ctx.mesh(), u, v);
    g += 2.0 * ctx.kappa() * apply_density_coupling(ctx.mesh(), u, v);
  }
  return g;
}

/// Lagrange multiplier lambda = <E'(u), u>.
inline double lagrange_lambda(const EnergyContext& ctx, const Field& u) { return eprime(ctx, u).dot(u.vec()); }

/// Energy-adaptive form a_u = A0 + kappa D(u), SPD under the balance condition.
inline SparseOperator au_operator(const EnergyContext& ctx, const Field& u) {
  if (ctx.kappa() == 0.0) return ctx.linear_part();
  return ctx.linear_part() + ctx.kappa() * assemble_density_mass(ctx.mesh(), u);
}

/// Assembled E''(u); only the verifier needs it as a matrix.
inline SparseOperator hessian_operator(const EnergyContext& ctx, const Field& u) {
  if (ctx.kappa() == 0.0) return ctx.linear_part();
  return au_operator(ctx, u) + (2.0 * ctx.kappa()) * assemble_density_coupling(ctx.mesh(), u);
}

}  // namespace rcsg
