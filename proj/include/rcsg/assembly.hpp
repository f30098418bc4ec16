#pragma once

#include <array>
#include <functional>
#include <vector>

#include "rcsg/field.hpp"
#include "rcsg/mesh.hpp"
#include "rcsg/sparse.hpp"

namespace rcsg {

using ScalarField = std::function<double(double, double)>;

/// Discrete carriers of the four quadratic pieces of the energy, all acting on
/// the real-pair space of dimension 2N.
struct OperatorSet {
  SparseOperator mass;       // M
  SparseOperator stiffness;  // K
  SparseOperator potential;  // (V v, w)
  SparseOperator rotation;   // -Omega (L3 v, w), real-symmetric form
};

namespace detail {

inline std::array<int, 3> element_dofs(const Mesh& mesh, int tri) {
  const auto& t = mesh.triangles[tri];
  return {mesh.dof_of_node[t[0]], mesh.dof_of_node[t[1]], mesh.dof_of_node[t[2]]};
}

// Adds a scalar N x N element block to both diagonal blocks of the pair space.
inline void add_block_diagonal(std::vector<Triplet>& trips, const std::array<int, 3>& dofs,
                               const double (&local)[3][3], int n) {
  for (int a = 0; a < 3; ++a) {
    if (dofs[a] < 0) continue;
    for (int b = 0; b < 3; ++b) {
      if (dofs[b] < 0) continue;
      trips.emplace_back(dofs[a], dofs[b], local[a][b]);
      trips.emplace_back(dofs[a] + n, dofs[b] + n, local[a][b]);
    }
  }
}

// Integrates weight(x, y) * phi_a * phi_b with the 6-point rule.
template <class Weight>
void weighted_mass(const ElementGeometry& g, Weight&& weight, double (&local)[3][3]) {
  for (auto& row : local)
    for (double& v : row) v = 0.0;
  for (const auto& q : kGauss6) {
    const double wq = q.weight * g.area * weight(q);
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) local[a][b] += wq * q.bary[a] * q.bary[b];
  }
}

}  // namespace detail

/// Assembles M, K, the potential-weighted mass and the rotation form.
///
/// K and M use the exact P1 element matrices, the potential and rotation
/// terms the degree-4 Gauss rule. The rotation form couples the re and im
/// blocks as [[0, -Omega B], [Omega B, 0]] with B_jk = int phi_j (x d_y - y d_x) phi_k,
/// and is averaged with its transpose after assembly.
inline OperatorSet assemble_operators(const Mesh& mesh, const ScalarField& potential, double omega) {
  const int n = mesh.num_dofs();
  std::vector<Triplet> mass, stiff, pot, rot;
  const std::size_t per = 18 * mesh.triangles.size();
  mass.reserve(per);
  stiff.reserve(per);
  pot.reserve(per);
  if (omega != 0.0) rot.reserve(per);

  double local[3][3];
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& g = mesh.geometry[t];
    const auto dofs = detail::element_dofs(mesh, t);
    if (dofs[0] < 0 && dofs[1] < 0 && dofs[2] < 0) continue;

    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) local[a][b] = g.area * (a == b ? 2.0 : 1.0) / 12.0;
    detail::add_block_diagonal(mass, dofs, local, n);

    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        local[a][b] = g.area * (g.grad[a][0] * g.grad[b][0] + g.grad[a][1] * g.grad[b][1]);
    detail::add_block_diagonal(stiff, dofs, local, n);

    detail::weighted_mass(
        g, [&](const QuadraturePoint& q) { const Point p = g.map(q.bary); return potential(p.x, p.y); },
        local);
    detail::add_block_diagonal(pot, dofs, local, n);

    if (omega != 0.0) {
      double bmat[3][3] = {};
      for (const auto& q : kGauss6) {
        const Point p = g.map(q.bary);
        const double wq = q.weight * g.area;
        for (int b = 0; b < 3; ++b) {
          const double dphi = p.x * g.grad[b][1] - p.y * g.grad[b][0];
          for (int a = 0; a < 3; ++a) bmat[a][b] += wq * q.bary[a] * dphi;
        }
      }
      for (int a = 0; a < 3; ++a) {
        if (dofs[a] < 0) continue;
        for (int b = 0; b < 3; ++b) {
          if (dofs[b] < 0) continue;
          rot.emplace_back(dofs[a], dofs[b] + n, -omega * bmat[a][b]);
          rot.emplace_back(dofs[a] + n, dofs[b], omega * bmat[a][b]);
        }
      }
    }
  }

  OperatorSet ops;
  ops.mass = SparseOperator::from_triplets(2 * n, mass, true);
  ops.stiffness = SparseOperator::from_triplets(2 * n, stiff, true);
  ops.potential = SparseOperator::from_triplets(2 * n, pot, true);
  ops.rotation = SparseOperator::from_triplets(2 * n, rot, true);
  return ops;
}

/// Matrix of the form (|u|^2 v, w) with u taken as its P1 interpolant.
inline SparseOperator assemble_density_mass(const Mesh& mesh, const Field& u) {
  const int n = mesh.num_dofs();
  std::vector<Triplet> trips;
  trips.reserve(18 * mesh.triangles.size());
  double local[3][3];
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto dofs = detail::element_dofs(mesh, t);
    if (dofs[0] < 0 && dofs[1] < 0 && dofs[2] < 0) continue;
    detail::weighted_mass(
        mesh.geometry[t],
        [&](const QuadraturePoint& q) {
          const auto z = evaluate_on_element(mesh, t, u, q.bary);
          return z[0] * z[0] + z[1] * z[1];
        },
        local);
    detail::add_block_diagonal(trips, dofs, local, n);
  }
  return SparseOperator::from_triplets(2 * n, trips, true);
}

/// Matrix of the form (Re(u conj(v)) u, w), the extra Hessian term.
inline SparseOperator assemble_density_coupling(const Mesh& mesh, const Field& u) {
  const int n = mesh.num_dofs();
  std::vector<Triplet> trips;
  trips.reserve(36 * mesh.triangles.size());
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto dofs = detail::element_dofs(mesh, t);
    if (dofs[0] < 0 && dofs[1] < 0 && dofs[2] < 0) continue;
    const auto& g = mesh.geometry[t];
    double rr[3][3] = {}, ri[3][3] = {}, ii[3][3] = {};
    for (const auto& q : kGauss6) {
      const auto z = evaluate_on_element(mesh, t, u, q.bary);
      const double wq = q.weight * g.area;
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) {
          const double pp = wq * q.bary[a] * q.bary[b];
          rr[a][b] += pp * z[0] * z[0];
          ri[a][b] += pp * z[0] * z[1];
          ii[a][b] += pp * z[1] * z[1];
        }
    }
    for (int a = 0; a < 3; ++a) {
      if (dofs[a] < 0) continue;
      for (int b = 0; b < 3; ++b) {
        if (dofs[b] < 0) continue;
        trips.emplace_back(dofs[a], dofs[b], rr[a][b]);
        trips.emplace_back(dofs[a], dofs[b] + n, ri[a][b]);
        trips.emplace_back(dofs[a] + n, dofs[b], ri[a][b]);
        trips.emplace_back(dofs[a] + n, dofs[b] + n, ii[a][b]);
      }
    }
  }
  return SparseOperator::from_triplets(2 * n, trips, true);
}

namespace detail {

// Shared element loop for the matrix-free density terms. `kernel` receives
// the interpolated (u, v) at a quadrature point and returns the pair that
// multiplies phi_a in the (re, im) rows.
template <class Kernel>
Vector apply_density_term(const Mesh& mesh, const Field& u, const Field& v, Kernel&& kernel) {
  const int n = mesh.num_dofs();
  Vector out = Vector::Zero(2 * n);
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto dofs = element_dofs(mesh, t);
    if (dofs[0] < 0 && dofs[1] < 0 && dofs[2] < 0) continue;
    const auto& g = mesh.geometry[t];
    for (const auto& q : kGauss6) {
      const auto zu = evaluate_on_element(mesh, t, u, q.bary);
      const auto zv = evaluate_on_element(mesh, t, v, q.bary);
      const auto f = kernel(zu, zv);
      const double wq = q.weight * g.area;
      for (int a = 0; a < 3; ++a) {
        if (dofs[a] < 0) continue;
        out[dofs[a]] += wq * q.bary[a] * f[0];
        out[dofs[a] + n] += wq * q.bary[a] * f[1];
      }
    }
  }
  return out;
}

}  // namespace detail

/// Coefficients of w -> (|u|^2 v, w) without assembling the matrix.
inline Vector apply_density_mass(const Mesh& mesh, const Field& u, const Field& v) {
  return detail::apply_density_term(mesh, u, v, [](const auto& zu, const auto& zv) {
    const double rho = zu[0] * zu[0] + zu[1] * zu[1];
    return std::array<double, 2>{rho * zv[0], rho * zv[1]};
  });
}

/// Coefficients of w -> (Re(u conj(v)) u, w) without assembling the matrix.
inline Vector apply_density_coupling(const Mesh& mesh, const Field& u, const Field& v) {
  return detail::apply_density_term(mesh, u, v, [](const auto& zu, const auto& zv) {
    const double s = zu[0] * zv[0] + zu[1] * zv[1];
    return std::array<double, 2>{s * zu[0], s * zu[1]};
  });
}

/// int |u|^4, exact for P1 fields under the degree-4 rule.
inline double l4_norm4(const Mesh& mesh, const Field& u) {
  double acc = 0.0;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& g = mesh.geometry[t];
    double local = 0.0;
    for (const auto& q : kGauss6) {
      const auto z = evaluate_on_element(mesh, t, u, q.bary);
      const double rho = z[0] * z[0] + z[1] * z[1];
      local += q.weight * rho * rho;
    }
    acc += g.area * local;
  }
  return acc;
}

/// Coefficients c0..c4 of tau -> int |u + tau d|^4 = sum_k c_k tau^k.
inline std::array<double, 5> quartic_polynomial(const Mesh& mesh, const Field& u, const Field& d) {
  double aa = 0, ab = 0, bb = 0, ac = 0, bc = 0, cc = 0;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& g = mesh.geometry[t];
    for (const auto& q : kGauss6) {
      const auto zu = evaluate_on_element(mesh, t, u, q.bary);
      const auto zd = evaluate_on_element(mesh, t, d, q.bary);
      const double a = zu[0] * zu[0] + zu[1] * zu[1];
      const double b = zu[0] * zd[0] + zu[1] * zd[1];
      const double c = zd[0] * zd[0] + zd[1] * zd[1];
      const double w = q.weight * g.area;
      aa += w * a * a;
      ab += w * a * b;
      bb += w * b * b;
      ac += w * a * c;
      bc += w * b * c;
      cc += w * c * c;
    }
  }
  // |u + tau d|^2 = a + 2 tau b + tau^2 c
  return {aa, 4.0 * ab, 4.0 * bb + 2.0 * ac, 4.0 * bc, cc};
}

/// Real L2 inner product Re int u conj(v) = u^T M v.
inline double l2_inner(const SparseOperator& mass, const Field& u, const Field& v) {
  return mass.form(u.vec(), v.vec());
}

inline double l2_norm(const SparseOperator& mass, const Field& u) { return std::sqrt(l2_inner(mass, u, u)); }

}  // namespace rcsg
