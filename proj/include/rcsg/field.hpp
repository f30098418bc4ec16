#pragma once

#include <complex>
#include <functional>
#include <stdexcept>

#include "rcsg/mesh.hpp"
#include "rcsg/sparse.hpp"

namespace rcsg {

/// Complex P1 coefficient vector on the interior nodes, stored as the real
/// pair [re; im] so that every real inner product in play is a plain
/// quadratic form on a 2N real vector.
class Field {
 public:
  Field() = default;
  explicit Field(int num_dofs) : v_(Vector::Zero(2 * static_cast<Eigen::Index>(num_dofs))) {}
  explicit Field(Vector pair) : v_(std::move(pair)) {
    if (v_.size() % 2 != 0) throw std::invalid_argument("Field: real-pair vector must have even length");
  }

  int num_dofs() const { return static_cast<int>(v_.size() / 2); }
  const Vector& vec() const { return v_; }
  Vector& vec() { return v_; }

  auto re() { return v_.head(num_dofs()); }
  auto im() { return v_.tail(num_dofs()); }
  auto re() const { return v_.head(num_dofs()); }
  auto im() const { return v_.tail(num_dofs()); }

  std::complex<double> at(int dof) const { return {v_[dof], v_[dof + num_dofs()]}; }

  /// Multiplication by the imaginary unit: (re, im) -> (-im, re).
  Field times_i() const {
    Field r(num_dofs());
    r.re() = -im();
    r.im() = re();
    return r;
  }

  /// Multiplication by exp(i*omega).
  Field phase_shift(double omega) const {
    const double c = std::cos(omega), s = std::sin(omega);
    Field r(num_dofs());
    r.re() = c * re() - s * im();
    r.im() = s * re() + c * im();
    return r;
  }

  Field conj() const {
    Field r(*this);
    r.im() = -im();
    return r;
  }

  Field& operator+=(const Field& o) { v_ += o.v_; return *this; }
  Field& operator-=(const Field& o) { v_ -= o.v_; return *this; }
  Field& operator*=(double s) { v_ *= s; return *this; }
  friend Field operator+(Field a, const Field& b) { a += b; return a; }
  friend Field operator-(Field a, const Field& b) { a -= b; return a; }
  friend Field operator*(double s, Field a) { a *= s; return a; }
  friend Field operator-(Field a) { a.v_ = -a.v_; return a; }

 private:
  Vector v_;
};

using ComplexFunction = std::function<std::complex<double>(double, double)>;

/// Nodal interpolation onto the interior nodes. Not normalized.
inline Field interpolate(const Mesh& mesh, const ComplexFunction& f) {
  Field u(mesh.num_dofs());
  for (int k = 0; k < mesh.num_dofs(); ++k) {
    const Point& p = mesh.nodes[mesh.node_of_dof[k]];
    const std::complex<double> z = f(p.x, p.y);
    u.re()[k] = z.real();
    u.im()[k] = z.imag();
  }
  return u;
}

/// Values of the P1 interpolant (re, im) at barycentric coordinates inside a
/// triangle; boundary vertices contribute zero.
inline std::array<double, 2> evaluate_on_element(const Mesh& mesh, int tri, const Field& u,
                                                 const std::array<double, 3>& bary) {
  double re = 0.0, im = 0.0;
  const int n = u.num_dofs();
  for (int a = 0; a < 3; ++a) {
    const int dof = mesh.dof_of_node[mesh.triangles[tri][a]];
    if (dof < 0) continue;
    re += bary[a] * u.vec()[dof];
    im += bary[a] * u.vec()[dof + n];
  }
  return {re, im};
}

}  // namespace rcsg
