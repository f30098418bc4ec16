#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace rcsg {

using Vector = Eigen::VectorXd;
using CsrMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor, int>;
using Triplet = Eigen::Triplet<double, int>;

/// Real sparse operator on the real-pair space, stored in compressed rows.
///
/// Products are evaluated row by row in storage order, so results are
/// reproducible bit-for-bit for identical inputs.
class SparseOperator {
 public:
  SparseOperator() = default;
  SparseOperator(CsrMatrix matrix, bool symmetric) : mat_(std::move(matrix)), symmetric_(symmetric) {
    mat_.makeCompressed();
  }

  /// Builds from (possibly duplicated) triplets; duplicates are summed in
  /// input order. With `symmetrize`, the result is replaced by (A + A^T)/2.
  static SparseOperator from_triplets(int dim, const std::vector<Triplet>& triplets, bool symmetrize) {
    CsrMatrix m(dim, dim);
    m.setFromTriplets(triplets.begin(), triplets.end());
    if (symmetrize) {
      CsrMatrix t = m.transpose();
      m = 0.5 * (m + t);
    }
    m.makeCompressed();
    return SparseOperator(std::move(m), symmetrize);
  }

  int dim() const { return static_cast<int>(mat_.rows()); }
  bool symmetric() const { return symmetric_; }
  const CsrMatrix& matrix() const { return mat_; }
  long nonzeros() const { return mat_.nonZeros(); }

  void apply(const Vector& x, Vector& y) const {
    y.resize(mat_.rows());
    const int* outer = mat_.outerIndexPtr();
    const int* inner = mat_.innerIndexPtr();
    const double* val = mat_.valuePtr();
    for (int r = 0; r < mat_.rows(); ++r) {
      double acc = 0.0;
      for (int k = outer[r]; k < outer[r + 1]; ++k) acc += val[k] * x[inner[k]];
      y[r] = acc;
    }
  }

  Vector apply(const Vector& x) const {
    Vector y;
    apply(x, y);
    return y;
  }

  /// Bilinear form w^T A v.
  double form(const Vector& v, const Vector& w) const { return w.dot(apply(v)); }

  Vector diagonal() const { return mat_.diagonal(); }

  double max_abs() const {
    double m = 0.0;
    for (int k = 0; k < mat_.nonZeros(); ++k) m = std::max(m, std::abs(mat_.valuePtr()[k]));
    return m;
  }

  /// max |A - A^T| over all entries.
  double max_asymmetry() const {
    CsrMatrix t = mat_.transpose();
    CsrMatrix d = mat_ - t;
    double m = 0.0;
    for (int k = 0; k < d.nonZeros(); ++k) m = std::max(m, std::abs(d.valuePtr()[k]));
    return m;
  }

  friend SparseOperator operator+(const SparseOperator& a, const SparseOperator& b) {
    CsrMatrix m = a.mat_ + b.mat_;
    return SparseOperator(std::move(m), a.symmetric_ && b.symmetric_);
  }

  friend SparseOperator operator*(double s, const SparseOperator& a) {
    CsrMatrix m = s * a.mat_;
    return SparseOperator(std::move(m), a.symmetric_);
  }

 private:
  CsrMatrix mat_;
  bool symmetric_ = false;
};

/// Raised when an iterative linear solve breaks down or misses its tolerance.
class LinearSolveError : public std::runtime_error {
 public:
  LinearSolveError(const std::string& what, int iterations, double residual)
      : std::runtime_error(what), iterations_(iterations), residual_(residual) {}
  int iterations() const { return iterations_; }
  double residual() const { return residual_; }

 private:
  int iterations_;
  double residual_;
};

struct SolveReport {
  int iterations = 0;
  double relative_residual = 0.0;
};

/// Jacobi-preconditioned conjugate gradients for symmetric positive definite A.
///
/// Stops once ||b - A x|| <= tol * ||b|| (true residual recomputed at the
/// end). A non-positive curvature p^T A p signals a matrix that is not SPD.
/// `x0` is an optional warm start.
inline Vector solve_spd(const SparseOperator& A, const Vector& b, double tol, int max_iter,
                        const Vector* x0 = nullptr, SolveReport* report = nullptr) {
  if (!(tol > 0.0)) throw std::invalid_argument("solve_spd: tolerance must be positive");
  const int n = A.dim();
  if (b.size() != n) throw std::invalid_argument("solve_spd: dimension mismatch");

  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    if (report) *report = {0, 0.0};
    return Vector::Zero(n);
  }

  const Vector diag = A.diagonal();
  Vector inv_diag(n);
  for (int i = 0; i < n; ++i) {
    if (!(diag[i] > 0.0)) {
      throw LinearSolveError("solve_spd: non-positive diagonal entry, operator is not SPD", 0,
                             std::numeric_limits<double>::infinity());
    }
    inv_diag[i] = 1.0 / diag[i];
  }

  Vector x = (x0 != nullptr && x0->size() == n) ? *x0 : Vector::Zero(n);
  Vector r = b - A.apply(x);
  Vector z(n), p(n), q(n);
  const double target = tol * bnorm;
  double rnorm = r.norm();

  int it = 0;
  // The recursive residual drifts from b - A x; whenever it claims
  // convergence the true residual is checked and CG restarted from x.
  while (rnorm > target && it < max_iter) {
    z = r.cwiseProduct(inv_diag);
    p = z;
    double rz = r.dot(z);
    while (rnorm > target && it < max_iter) {
      A.apply(p, q);
      const double curvature = p.dot(q);
      if (!(curvature > 0.0)) {
        throw LinearSolveError("solve_spd: non-positive curvature encountered, operator is not SPD", it,
                               rnorm / bnorm);
      }
      const double alpha = rz / curvature;
      x.noalias() += alpha * p;
      r.noalias() -= alpha * q;
      ++it;
      rnorm = r.norm();
      z = r.cwiseProduct(inv_diag);
      const double rz_new = r.dot(z);
      p = z + (rz_new / rz) * p;
      rz = rz_new;
    }
    r = b - A.apply(x);
    rnorm = r.norm();
  }

  const double true_res = rnorm / bnorm;
  if (report) *report = {it, true_res};
  if (!(rnorm <= target)) {
    throw LinearSolveError("solve_spd: no convergence after " + std::to_string(it) +
                               " iterations, relative residual " + std::to_string(true_res),
                           it, true_res);
  }
  return x;
}

}  // namespace rcsg
