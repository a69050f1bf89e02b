#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <stdexcept>

namespace aru {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Thrown when a Cholesky pivot is not strictly positive: the system matrix
/// is not positive definite (ridge too small, or corrupted statistics).
struct NotPositiveDefinite : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// v v^T. Exactly symmetric: entry (i,j) is the IEEE product v[i]*v[j].
inline Matrix outer(const Vector& v) { return v * v.transpose(); }

/// alpha*A + B, elementwise. Shapes must match.
inline Matrix axpy_matrix(double alpha, const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("axpy_matrix: shape mismatch");
  return alpha * a + b;
}

/// Solves A x = b for small symmetric positive definite A via Cholesky.
/// Sizes here stay tiny (at most a few dozen), so a dense O(d^3) factor
/// per call is fine. A couple of refinement sweeps through the same factors
/// keep the residual near roundoff even around condition 1e8.
inline Vector spd_solve(const Matrix& a, const Vector& b) {
  if (a.rows() != a.cols() || a.rows() != b.size())
    throw std::invalid_argument("spd_solve: shape mismatch");
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success)
    throw NotPositiveDefinite("spd_solve: matrix not positive definite");
  Vector x = llt.solve(b);
  const double target = 1e-12 * (1.0 + b.lpNorm<Eigen::Infinity>());
  for (int sweep = 0; sweep < 3; ++sweep) {
    const Vector r = b - a * x;
    if (r.lpNorm<Eigen::Infinity>() <= target) break;
    x += llt.solve(r);
  }
  return x;
}

inline Matrix symmetrized(const Matrix& m) {
  return 0.5 * (m + m.transpose());
}

}  // namespace aru
