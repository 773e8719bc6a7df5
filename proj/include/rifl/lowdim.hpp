#pragma once

#include <cmath>
#include <vector>

#include "rifl/aggregate.hpp"
#include "rifl/glm.hpp"

namespace rifl {

// theta_hat with C such that sqrt(n)(theta_hat - theta) -> N(0, C).
struct ParametricSiteFit {
  Vector theta;
  Matrix C;
  long n = 0;

  void validate() const {
    if (theta.size() == 0 || C.rows() != theta.size() || C.cols() != theta.size())
      throw DomainError("parametric fit: theta and C disagree in dimension");
    if (!C.isApprox(C.transpose(), 1e-10)) throw DomainError("parametric fit: C must be symmetric");
    if (n < 1) throw DomainError("parametric fit: n must be positive");
  }
};

// Target functional g(theta).  Subvector functionals are multivariate; the
// others are scalar.
class Functional {
 public:
  enum class Kind { coordinate, subvector, linear, quadratic_norm };

  static Functional coordinate(Index j) { return Functional(Kind::coordinate, {j}, Vector()); }
  static Functional subvector(std::vector<Index> g) { return Functional(Kind::subvector, std::move(g), Vector()); }
  static Functional linear(Vector x) { return Functional(Kind::linear, {}, std::move(x)); }
  static Functional quadratic_norm() { return Functional(Kind::quadratic_norm, {}, Vector()); }

  Kind kind() const { return kind_; }
  Index dim() const { return kind_ == Kind::subvector ? static_cast<Index>(idx_.size()) : 1; }

  Vector value(const Vector& theta) const {
    check(theta.size());
    switch (kind_) {
      case Kind::coordinate: return Vector::Constant(1, theta(idx_[0]));
      case Kind::subvector: return take(theta, idx_);
      case Kind::linear: return Vector::Constant(1, x_.dot(theta));
      case Kind::quadratic_norm: return Vector::Constant(1, theta.squaredNorm());
    }
    return Vector();
  }

  // dim() x d Jacobian
  Matrix jacobian(const Vector& theta) const {
    check(theta.size());
    const Index d = theta.size();
    Matrix J = Matrix::Zero(dim(), d);
    switch (kind_) {
      case Kind::coordinate: J(0, idx_[0]) = 1.0; break;
      case Kind::subvector:
        for (std::size_t r = 0; r < idx_.size(); ++r) J(static_cast<Index>(r), idx_[r]) = 1.0;
        break;
      case Kind::linear: J.row(0) = x_.transpose(); break;
      case Kind::quadratic_norm: J.row(0) = 2.0 * theta.transpose(); break;
    }
    return J;
  }

 private:
  Functional(Kind k, std::vector<Index> idx, Vector x) : kind_(k), idx_(std::move(idx)), x_(std::move(x)) {
    if (k == Kind::subvector && idx_.empty()) throw DomainError("subvector functional needs indices");
  }

  void check(Index d) const {
    for (Index j : idx_)
      if (j < 0 || j >= d) throw DomainError("functional index out of range");
    if (kind_ == Kind::linear && x_.size() != d) throw DomainError("linear functional has the wrong length");
  }

  Kind kind_;
  std::vector<Index> idx_;
  Vector x_;
};

// beta = g(theta_hat), Var(beta) = J C J' / n.
inline SiteSummary delta_method_summary(const ParametricSiteFit& fit, const Functional& g, int site_id = 0) {
  fit.validate();
  Matrix J = g.jacobian(fit.theta);
  if (J.isZero(0.0)) throw DegenerateFunctionalError("functional has zero gradient at the estimate");
  Matrix omega = J * fit.C * J.transpose() / static_cast<double>(fit.n);
  Vector beta = g.value(fit.theta);
  if (g.dim() == 1) {
    if (!(omega(0, 0) > 0)) throw DegenerateFunctionalError("functional has zero delta-method variance");
    return SiteSummary::univariate(site_id, beta(0), std::sqrt(omega(0, 0)), fit.n);
  }
  return SiteSummary::multivariate(site_id, std::move(beta), std::move(omega), fit.n);
}

// Squared distance between two fits with the delta-method SE inflated by
// 1/min(n); the inflation covers the degenerate gradient at gamma = 0.
inline DistanceEstimate dissimilarity_lowdim(const ParametricSiteFit& a, const ParametricSiteFit& b) {
  a.validate();
  b.validate();
  if (a.theta.size() != b.theta.size()) throw DomainError("dissimilarity_lowdim: dimension mismatch");
  Vector g = a.theta - b.theta;
  double v = 4.0 * g.dot(a.C * g) / static_cast<double>(a.n) + 4.0 * g.dot(b.C * g) / static_cast<double>(b.n) +
             1.0 / static_cast<double>(std::min(a.n, b.n));
  return {g.squaredNorm(), std::sqrt(v)};
}

// GLM fit on [1, X]; the intercept is a site-specific nuisance and is dropped
// from theta unless requested.
inline ParametricSiteFit fit_parametric_site(const Matrix& X, const Vector& y, stats::Family family,
                                             bool keep_intercept = false) {
  auto fit = stats::irls_glm_fit(with_intercept(X), y, family);
  ParametricSiteFit out;
  out.n = static_cast<long>(X.rows());
  if (keep_intercept) {
    out.theta = fit.coef;
    out.C = fit.covariance;
  } else {
    const Index d = X.cols();
    out.theta = fit.coef.tail(d);
    out.C = fit.covariance.bottomRightCorner(d, d);
  }
  return out;
}

// Site summaries for g together with the global squared distances between
// full parameter vectors and the local functional differences.
inline RiflInputs lowdim_table(const std::vector<ParametricSiteFit>& fits, const Functional& g) {
  RiflInputs in;
  for (std::size_t l = 0; l < fits.size(); ++l) in.summaries.push_back(delta_method_summary(fits[l], g, static_cast<int>(l)));
  in.table = local_dissimilarity(in.summaries, true);
  const int L = static_cast<int>(fits.size());
  for (int l = 0; l < L; ++l)
    for (int k = l + 1; k < L; ++k) {
      auto d = dissimilarity_lowdim(fits[l], fits[k]);
      in.table.set_global(l, k, d.value, d.se);
    }
  return in;
}

}  // namespace rifl
