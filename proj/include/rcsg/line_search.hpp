#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "rcsg/energy.hpp"
#include "rcsg/field.hpp"

namespace rcsg {

struct GoldenResult {
  double x = 0.0;
  double fx = 0.0;
  int evaluations = 0;
};

/// Golden-section minimization of f on [a, b] until the bracket is narrower
/// than tol. The endpoints are compared against the interior estimate at the
/// end, so a monotone f returns the better endpoint.
template <class F>
GoldenResult golden_section_minimize(F&& f, double a, double b, double tol) {
  if (!(a < b)) throw std::invalid_argument("golden_section_minimize: empty bracket");
  if (!(tol > 0.0)) throw std::invalid_argument("golden_section_minimize: tolerance must be positive");
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  const double lo = a, hi = b;
  double c = b - invphi * (b - a);
  double d = a + invphi * (b - a);
  double fc = f(c), fd = f(d);
  int evals = 2;
  while (b - a > tol) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = f(d);
    }
    ++evals;
  }
  GoldenResult best{fc <= fd ? c : d, fc <= fd ? fc : fd, evals};
  const double flo = f(lo), fhi = f(hi);
  evals += 2;
  if (flo < best.fx) best = {lo, flo, evals};
  if (fhi < best.fx) best = {hi, fhi, evals};
  best.evaluations = evals;
  return best;
}

/// phi(tau) = E((u + tau d) / ||u + tau d||) in closed form: the quadratic
/// part and the norm are quadratics in tau and the quartic part a quartic,
/// so each evaluation costs a handful of flops after one pass over the mesh.
class StepEnergy {
 public:
  StepEnergy(const EnergyContext& ctx, const Field& u, const Field& d) : kappa_(ctx.kappa()) {
    const Vector au = ctx.linear_part().apply(u.vec());
    const Vector ad = ctx.linear_part().apply(d.vec());
    q_ = {u.vec().dot(au), d.vec().dot(au), d.vec().dot(ad)};
    m_ = {ctx.l2_inner(u, u), ctx.l2_inner(u, d), ctx.l2_inner(d, d)};
    if (kappa_ != 0.0) p_ = quartic_polynomial(ctx.mesh(), u, d);
  }

  double norm2(double tau) const { return m_[0] + tau * (2.0 * m_[1] + tau * m_[2]); }

  double operator()(double tau) const {
    const double s2 = norm2(tau);
    const double quad = q_[0] + tau * (2.0 * q_[1] + tau * q_[2]);
    double value = 0.5 * quad / s2;
    if (kappa_ != 0.0) {
      const double quart = p_[0] + tau * (p_[1] + tau * (p_[2] + tau * (p_[3] + tau * p_[4])));
      value += 0.25 * kappa_ * quart / (s2 * s2);
    }
    return value;
  }

  /// phi(tau) - phi(0) with the constant term cancelled analytically, so the
  /// value keeps full relative precision even when the change is tiny
  /// compared with the energy itself.
  double decrease(double tau) const {
    const auto [m0, m1, m2] = m_;
    const double s2 = norm2(tau);
    const double dq = tau * (2.0 * (q_[1] * m0 - q_[0] * m1) + tau * (q_[2] * m0 - q_[0] * m2));
    double value = 0.5 * dq / (s2 * m0);
    if (kappa_ != 0.0) {
      const auto& p = p_;
      const double c1 = p[1] * m0 * m0 - 4.0 * p[0] * m0 * m1;
      const double c2 = p[2] * m0 * m0 - p[0] * (4.0 * m1 * m1 + 2.0 * m0 * m2);
      const double c3 = p[3] * m0 * m0 - 4.0 * p[0] * m1 * m2;
      const double c4 = p[4] * m0 * m0 - p[0] * m2 * m2;
      const double dp = tau * (c1 + tau * (c2 + tau * (c3 + tau * c4)));
      value += 0.25 * kappa_ * dp / (s2 * s2 * m0 * m0);
    }
    return value;
  }

  /// d phi / d tau, from the same cancellation-free polynomials.
  double derivative(double tau) const {
    const auto [m0, m1, m2] = m_;
    const double s2 = norm2(tau), ds2 = 2.0 * (m1 + tau * m2);
    const double a = q_[1] * m0 - q_[0] * m1, b = q_[2] * m0 - q_[0] * m2;
    const double dq = tau * (2.0 * a + tau * b), ddq = 2.0 * (a + tau * b);
    double value = 0.5 * (ddq * s2 - dq * ds2) / (s2 * s2 * m0);
    if (kappa_ != 0.0) {
      const auto& p = p_;
      const double c1 = p[1] * m0 * m0 - 4.0 * p[0] * m0 * m1;
      const double c2 = p[2] * m0 * m0 - p[0] * (4.0 * m1 * m1 + 2.0 * m0 * m2);
      const double c3 = p[3] * m0 * m0 - 4.0 * p[0] * m1 * m2;
      const double c4 = p[4] * m0 * m0 - p[0] * m2 * m2;
      const double dp = tau * (c1 + tau * (c2 + tau * (c3 + tau * c4)));
      const double ddp = c1 + tau * (2.0 * c2 + tau * (3.0 * c3 + tau * 4.0 * c4));
      value += 0.25 * kappa_ * (ddp * s2 - 2.0 * dp * ds2) / (s2 * s2 * s2 * m0 * m0);
    }
    return value;
  }

 private:
  double kappa_;
  std::array<double, 3> q_{};
  std::array<double, 3> m_{};
  std::array<double, 5> p_{};
};

struct LineSearchResult {
  double tau = 0.0;
  double phi = 0.0;
  double phi0 = 0.0;
  bool decreased = false;
  /// Minimizer within golden_tol of either end of the bracket.
  bool at_boundary = false;
};

/// Comparing values of phi locates its minimizer only to about sqrt(eps),
/// which leaves an orthogonality residual of the same relative size. Near an
/// interior golden-section result, bisection on the sign of phi' pins the
/// stationary point down to rounding. The window [x - h, x + h] is widened
/// until phi' changes sign across it; x is returned unchanged if it never does.
inline double polish_stationary_point(const StepEnergy& phi, double x, double h, double lo, double hi) {
  double a = x, b = x;
  for (;; h *= 4.0) {
    a = std::max(lo, x - h);
    b = std::min(hi, x + h);
    if (phi.derivative(a) < 0.0 && phi.derivative(b) > 0.0) break;
    if (a == lo && b == hi) return x;
  }
  for (int it = 0; it < 200; ++it) {
    const double m = 0.5 * (a + b);
    if (!(a < m && m < b)) break;
    const double fm = phi.derivative(m);
    if (fm == 0.0) return m;
    (fm < 0.0 ? a : b) = m;
  }
  const double best = std::abs(phi.derivative(a)) <= std::abs(phi.derivative(b)) ? a : b;
  const double fx = phi.decrease(x);
  return phi.decrease(best) <= fx + 8.0 * std::numeric_limits<double>::epsilon() * std::abs(fx) ? best : x;
}

inline LineSearchResult line_search_golden(const EnergyContext& ctx, const Field& u, const Field& d, double tau_min,
                                           double tau_max, double golden_tol) {
  if (!(0.0 < tau_min && tau_min < tau_max)) throw std::invalid_argument("line search: need 0 < tau_min < tau_max");
  const StepEnergy phi(ctx, u, d);
  const GoldenResult g =
      golden_section_minimize([&](double tau) { return phi.decrease(tau); }, tau_min, tau_max, golden_tol);
  LineSearchResult r;
  r.tau = g.x;
  r.at_boundary = (tau_max - g.x <= golden_tol) || (g.x - tau_min <= golden_tol);
  if (!r.at_boundary) r.tau = polish_stationary_point(phi, g.x, std::max(golden_tol, 1e-6 * g.x), tau_min, tau_max);
  r.phi0 = phi(0.0);
  const double dec = phi.decrease(r.tau);
  r.phi = r.phi0 + dec;
  r.decreased = dec < 0.0;
  return r;
}

/// (u + tau d) / ||u + tau d||_{L2}.
inline Field retract(const EnergyContext& ctx, const Field& u, const Field& d, double tau) {
  Field v(u);
  if (tau != 0.0) v.vec().noalias() += tau * d.vec();
  const double nrm = ctx.l2_norm(v);
  if (!(nrm > 0.0)) throw std::runtime_error("retract: u + tau d has vanishing L2 norm");
  v.vec() /= nrm;
  return v;
}

/// u / ||u||_{L2}.
inline Field normalize(const EnergyContext& ctx, const Field& u) {
  const double nrm = ctx.l2_norm(u);
  if (!(nrm > 0.0)) throw std::invalid_argument("normalize: zero field");
  return Field(Vector(u.vec() / nrm));
}

}  // namespace rcsg
