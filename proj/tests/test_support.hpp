#pragma once

#include <cmath>
#include <memory>
#include <random>

#include "rcsg/rcsg.hpp"

namespace rcsg::testing {

inline Physics exp1_physics() { return {2.0, 1.9, 1.9, 500.0, 6.0}; }
inline Physics exp2_physics() { return {1.1, 1.3, 1.2, 400.0, 8.0}; }

inline std::shared_ptr<const EnergyContext> make_ctx(const Physics& p, int n) {
  return std::make_shared<const EnergyContext>(std::make_shared<const Mesh>(build_mesh(p.L, n)), p);
}

inline Vector random_vector(std::mt19937_64& rng, Eigen::Index size) {
  std::normal_distribution<double> normal;
  Vector v(size);
  for (Eigen::Index i = 0; i < size; ++i) v[i] = normal(rng);
  return v;
}

inline Field random_field(std::mt19937_64& rng, int dofs) { return Field(random_vector(rng, 2 * dofs)); }

inline Field random_unit_field(std::mt19937_64& rng, const EnergyContext& ctx) {
  return normalize(ctx, random_field(rng, ctx.num_dofs()));
}

/// Smooth random state: a Gaussian envelope times a random low-order
/// complex polynomial, normalized.
inline Field smooth_unit_field(std::mt19937_64& rng, const EnergyContext& ctx) {
  std::normal_distribution<double> normal;
  std::complex<double> c[6];
  for (auto& z : c) z = {normal(rng), normal(rng)};
  const double L = ctx.mesh().L;
  const double s = 4.0 / (L * L);
  auto f = [&](double x, double y) {
    const std::complex<double> p = c[0] + c[1] * x + c[2] * y + c[3] * x * y + c[4] * x * x + c[5] * y * y;
    return p * std::exp(-s * (x * x + y * y));
  };
  return normalize(ctx, interpolate(ctx.mesh(), f));
}

/// Random tangent vector at u, normalized in L2.
inline Field random_tangent(std::mt19937_64& rng, const EnergyContext& ctx, const Field& u) {
  Field v = random_field(rng, ctx.num_dofs());
  v.vec() -= ctx.l2_inner(u, v) / ctx.l2_inner(u, u) * u.vec();
  return normalize(ctx, v);
}

inline double rel_diff(double a, double b) {
  const double s = std::max(std::abs(a), std::abs(b));
  return s == 0.0 ? 0.0 : std::abs(a - b) / s;
}

/// Integral over a triangle of area A of l1^a l2^b l3^c.
inline double barycentric_monomial(double area, int a, int b, int c) {
  auto fact = [](int k) {
    double r = 1.0;
    for (int i = 2; i <= k; ++i) r *= i;
    return r;
  };
  return 2.0 * area * fact(a) * fact(b) * fact(c) / fact(a + b + c + 2);
}

}  // namespace rcsg::testing
