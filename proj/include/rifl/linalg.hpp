#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "rifl/error.hpp"

namespace rifl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

// Cholesky attempt doubles as the positive-definiteness check.
inline bool is_spd(const Matrix& m) {
  if (m.rows() != m.cols() || !m.allFinite()) return false;
  if (!m.isApprox(m.transpose(), 1e-10)) return false;
  Eigen::LLT<Matrix> llt(m);
  return llt.info() == Eigen::Success;
}

// Inverse of a symmetric positive definite matrix.  On failure a ridge of
// 1e-8 * trace / dim is added before a second attempt.
inline Matrix spd_inverse(const Matrix& m) {
  const Index p = m.rows();
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() == Eigen::Success && llt.rcond() > 1e-14) {
    return llt.solve(Matrix::Identity(p, p));
  }
  double ridge = 1e-8 * m.trace() / static_cast<double>(p);
  if (!(ridge > 0)) throw SingularDesignError("spd_inverse: matrix has nonpositive trace");
  Matrix r = m;
  r.diagonal().array() += ridge;
  Eigen::LLT<Matrix> llt2(r);
  if (llt2.info() != Eigen::Success) throw SingularDesignError("spd_inverse: matrix is not positive definite");
  return llt2.solve(Matrix::Identity(p, p));
}

// Rows of m selected by idx, in order.
inline Matrix take_rows(const Matrix& m, const std::vector<Index>& idx) {
  Matrix out(static_cast<Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Index>(i)) = m.row(idx[i]);
  return out;
}

inline Vector take(const Vector& v, const std::vector<Index>& idx) {
  Vector out(static_cast<Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out(static_cast<Index>(i)) = v(idx[i]);
  return out;
}

// [1, X]
inline Matrix with_intercept(const Matrix& x) {
  Matrix out(x.rows(), x.cols() + 1);
  out.col(0).setOnes();
  out.rightCols(x.cols()) = x;
  return out;
}

inline double expit(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  double e = std::exp(t);
  return e / (1.0 + e);
}

}  // namespace rifl
