#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace rcsg {

/// Raised for invalid user-facing configuration (mesh sizes, physics, config files).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Per-triangle data that every assembly loop needs: area, the (constant)
/// gradients of the three P1 hat functions and the vertex coordinates.
struct ElementGeometry {
  double area = 0.0;
  std::array<std::array<double, 2>, 3> grad{};
  std::array<Point, 3> vertex{};

  Point map(const std::array<double, 3>& bary) const {
    return {bary[0] * vertex[0].x + bary[1] * vertex[1].x + bary[2] * vertex[2].x,
            bary[0] * vertex[0].y + bary[1] * vertex[1].y + bary[2] * vertex[2].y};
  }
};

/// Structured P1 triangulation of [-L,L]^2.
///
/// Nodes are numbered row-major, node (i,j) has index j*(n+1)+i and sits at
/// (-L + i*h, -L + j*h). Every square cell is split along the diagonal from
/// its lower-left to its upper-right corner, both halves counter-clockwise.
/// Boundary nodes carry no degree of freedom; interior nodes are numbered
/// row-major as well.
struct Mesh {
  double L = 0.0;
  int n = 0;
  double h = 0.0;
  std::vector<Point> nodes;
  std::vector<std::array<int, 3>> triangles;
  std::vector<ElementGeometry> geometry;
  std::vector<int> dof_of_node;  // -1 on the boundary
  std::vector<int> node_of_dof;

  int num_nodes() const { return static_cast<int>(nodes.size()); }
  int num_triangles() const { return static_cast<int>(triangles.size()); }
  int num_dofs() const { return static_cast<int>(node_of_dof.size()); }
  int nodes_per_side() const { return n + 1; }
};

inline Mesh build_mesh(double L, int n) {
  if (!(L > 0.0) || !std::isfinite(L)) {
    throw ConfigError("mesh half-width L must be positive, got " + std::to_string(L));
  }
  if (n < 4) {
    throw ConfigError("mesh subdivisions n must be at least 4, got " + std::to_string(n));
  }

  Mesh mesh;
  mesh.L = L;
  mesh.n = n;
  mesh.h = 2.0 * L / n;

  const int side = n + 1;
  mesh.nodes.reserve(static_cast<std::size_t>(side) * side);
  mesh.dof_of_node.assign(static_cast<std::size_t>(side) * side, -1);
  for (int j = 0; j < side; ++j) {
    for (int i = 0; i < side; ++i) {
      mesh.nodes.push_back({-L + i * mesh.h, -L + j * mesh.h});
      if (i > 0 && i < n && j > 0 && j < n) {
        const int node = j * side + i;
        mesh.dof_of_node[node] = static_cast<int>(mesh.node_of_dof.size());
        mesh.node_of_dof.push_back(node);
      }
    }
  }

  mesh.triangles.reserve(2 * static_cast<std::size_t>(n) * n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const int p00 = j * side + i;
      const int p10 = p00 + 1;
      const int p01 = p00 + side;
      const int p11 = p01 + 1;
      mesh.triangles.push_back({p00, p10, p11});
      mesh.triangles.push_back({p00, p11, p01});
    }
  }

  mesh.geometry.reserve(mesh.triangles.size());
  for (const auto& tri : mesh.triangles) {
    ElementGeometry g;
    for (int a = 0; a < 3; ++a) g.vertex[a] = mesh.nodes[tri[a]];
    const double x0 = g.vertex[0].x, y0 = g.vertex[0].y;
    const double x1 = g.vertex[1].x, y1 = g.vertex[1].y;
    const double x2 = g.vertex[2].x, y2 = g.vertex[2].y;
    const double det = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0);
    g.area = 0.5 * det;
    // grad(phi_a) = (y_b - y_c, x_c - x_b) / det for (a,b,c) cyclic.
    g.grad[0] = {(y1 - y2) / det, (x2 - x1) / det};
    g.grad[1] = {(y2 - y0) / det, (x0 - x2) / det};
    g.grad[2] = {(y0 - y1) / det, (x1 - x0) / det};
    mesh.geometry.push_back(g);
  }
  return mesh;
}

/// Symmetric 6-point Gauss rule on the reference triangle, exact for
/// polynomials of total degree 4. Weights are fractions of the element area.
struct QuadraturePoint {
  std::array<double, 3> bary;
  double weight;
};

inline constexpr double kQuadA = 0.091576213509770743460;
inline constexpr double kQuadB = 0.445948490915964886319;
inline constexpr double kQuadWA = 0.109951743655321868614;
inline constexpr double kQuadWB = 0.223381589678011465944;

inline constexpr std::array<QuadraturePoint, 6> kGauss6{{
    {{1.0 - 2.0 * kQuadA, kQuadA, kQuadA}, kQuadWA},
    {{kQuadA, 1.0 - 2.0 * kQuadA, kQuadA}, kQuadWA},
    {{kQuadA, kQuadA, 1.0 - 2.0 * kQuadA}, kQuadWA},
    {{1.0 - 2.0 * kQuadB, kQuadB, kQuadB}, kQuadWB},
    {{kQuadB, 1.0 - 2.0 * kQuadB, kQuadB}, kQuadWB},
    {{kQuadB, kQuadB, 1.0 - 2.0 * kQuadB}, kQuadWB},
}};

}  // namespace rcsg
