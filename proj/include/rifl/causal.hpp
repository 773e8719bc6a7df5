#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "rifl/aggregate.hpp"
#include "rifl/glm.hpp"
#include "rifl/newton.hpp"

namespace rifl {

struct CausalSiteData {
  Matrix X;  // n x p
  Vector A;  // 0/1
  Vector Y;

  void validate() const {
    const Index n = X.rows();
    if (A.size() != n || Y.size() != n) throw DomainError("causal data: X, A and Y disagree in length");
    Index treated = 0;
    for (Index i = 0; i < n; ++i) {
      if (A(i) != 0.0 && A(i) != 1.0) throw DomainError("causal data: treatment must be 0 or 1");
      treated += A(i) == 1.0;
    }
    if (treated == 0 || treated == n) throw DomainError("causal data: both arms must be nonempty");
  }
};

// Covariate columns entering each nuisance model (an intercept is always
// added).  Empty means all columns.
struct CausalBases {
  std::vector<Index> propensity;
  std::vector<Index> outcome;
  std::vector<Index> density;
};

struct NuisanceFits {
  Vector alpha;   // propensity, logistic on (1, X[propensity])
  Vector gamma0;  // outcome in the control arm, linear on (1, X[outcome])
  Vector gamma1;
  Vector eta;     // density ratio exp(eta' (1, X[density]))
};

// Derivatives of the estimator in each nuisance parameter; these are the d
// vectors of the influence function.
struct InfluenceTerms {
  Vector d_gamma0, d_gamma1, d_eta, d_alpha;
  Vector tau;  // per-observation influence, uncentered
};

struct AteEstimate {
  double theta = 0.0;
  double M = 0.0;      // outcome-model plug-in on the target sample
  double delta = 0.0;  // weighted residual augmentation
  double V = 0.0;      // asymptotic variance of sqrt(n)(theta_hat - theta)
  long n = 0;
  NuisanceFits fits;
  double se() const { return std::sqrt(V / static_cast<double>(n)); }
};

inline constexpr double kPropensityClip = 0.01;

namespace detail {

inline Matrix basis(const Matrix& X, const std::vector<Index>& cols) {
  if (cols.empty()) return with_intercept(X);
  Matrix out(X.rows(), static_cast<Index>(cols.size()) + 1);
  out.col(0).setOnes();
  for (std::size_t j = 0; j < cols.size(); ++j) {
    if (cols[j] < 0 || cols[j] >= X.cols()) throw DomainError("causal bases: column out of range");
    out.col(static_cast<Index>(j) + 1) = X.col(cols[j]);
  }
  return out;
}

// Inverse of a symmetric positive definite C, with a small ridge when the
// Cholesky factor fails.
inline Matrix spd_inverse(const Matrix& C) {
  Eigen::LLT<Matrix> llt(C);
  if (llt.info() != Eigen::Success) {
    const double ridge = 1e-8 * C.trace() / static_cast<double>(C.rows());
    llt.compute(C + ridge * Matrix::Identity(C.rows(), C.cols()));
    if (llt.info() != Eigen::Success) throw SingularDesignError("causal: information matrix is singular");
  }
  return llt.solve(Matrix::Identity(C.rows(), C.cols()));
}

// Everything evaluated per observation at a given set of nuisance values.
struct SiteTerms {
  Matrix Xa, W, Wd;       // propensity, outcome and density bases
  Vector h, pi1;          // fitted and clipped propensity
  Vector m0, m1, omega;
  Vector r;               // sum_a (-1)^{a+1} 1{A=a} (Y - m_a) / pi_a
};

inline SiteTerms evaluate(const CausalSiteData& d, const CausalBases& b, const NuisanceFits& f) {
  SiteTerms t;
  t.Xa = basis(d.X, b.propensity);
  t.W = basis(d.X, b.outcome);
  t.Wd = basis(d.X, b.density);
  const Index n = d.X.rows();
  Vector eta_a = t.Xa * f.alpha;
  t.h = eta_a.unaryExpr([](double e) { return expit(e); });
  t.pi1 = t.h.unaryExpr([](double p) { return std::clamp(p, kPropensityClip, 1.0 - kPropensityClip); });
  t.m0 = t.W * f.gamma0;
  t.m1 = t.W * f.gamma1;
  t.omega = (t.Wd * f.eta).array().exp();
  t.r.resize(n);
  for (Index i = 0; i < n; ++i)
    t.r(i) = d.A(i) == 1.0 ? (d.Y(i) - t.m1(i)) / t.pi1(i) : -(d.Y(i) - t.m0(i)) / (1.0 - t.pi1(i));
  return t;
}

inline Vector column_means(const Matrix& m) { return m.colwise().mean().transpose(); }

}  // namespace detail

// The target sample enters only through basis means; computing them once
// lets repeated fits (bootstrap, many sites) skip the N-row pass.
struct TargetMeans {
  Index p = 0;
  Vector outcome;  // mean of (1, X[outcome]) over the target sample
  Vector density;  // mean of (1, X[density])
};

inline TargetMeans target_means(const Matrix& X_target, const CausalBases& b = {}) {
  if (X_target.rows() < 1) throw DomainError("target sample is empty");
  return {X_target.cols(), detail::column_means(detail::basis(X_target, b.outcome)),
          detail::column_means(detail::basis(X_target, b.density))};
}

// Nuisance estimates by their estimating equations: logistic score for the
// propensity, per-arm least squares for the outcome, and exponential-tilt
// moment matching to the target sample for the density ratio.
inline NuisanceFits fit_nuisances(const CausalSiteData& d, const TargetMeans& tm, const CausalBases& b = {}) {
  d.validate();
  if (tm.p != d.X.cols()) throw DomainError("fit_nuisances: target sample has the wrong shape");
  NuisanceFits f;
  const Index n = d.X.rows();
  f.alpha = stats::irls_glm_fit(detail::basis(d.X, b.propensity), d.A, stats::Family::logistic).coef;

  Matrix W = detail::basis(d.X, b.outcome);
  for (int a = 0; a < 2; ++a) {
    std::vector<Index> rows;
    for (Index i = 0; i < n; ++i)
      if (d.A(i) == static_cast<double>(a)) rows.push_back(i);
    Vector g = stats::irls_glm_fit(take_rows(W, rows), take(d.Y, rows), stats::Family::linear).coef;
    (a == 0 ? f.gamma0 : f.gamma1) = std::move(g);
  }

  Matrix Wd = detail::basis(d.X, b.density);
  const Vector& target_mean = tm.density;
  auto residual = [&](const Vector& eta) -> Vector {
    Vector w = (Wd * eta).array().exp();
    return Wd.transpose() * w / static_cast<double>(n) - target_mean;
  };
  auto jacobian = [&](const Vector& eta) -> Matrix {
    Vector w = (Wd * eta).array().exp();
    return Wd.transpose() * w.asDiagonal() * Wd / static_cast<double>(n);
  };
  f.eta = stats::newton_solve(residual, jacobian, Vector::Zero(Wd.cols()));
  return f;
}

// theta = M + delta at arbitrary nuisance values.
inline AteEstimate dr_estimate(const CausalSiteData& d, const TargetMeans& tm, const NuisanceFits& f,
                               const CausalBases& b = {}) {
  auto t = detail::evaluate(d, b, f);
  AteEstimate e;
  e.n = static_cast<long>(d.X.rows());
  e.fits = f;
  e.M = tm.outcome.dot(f.gamma1 - f.gamma0);
  e.delta = t.omega.cwiseProduct(t.r).mean();
  e.theta = e.M + e.delta;
  return e;
}

// Influence function with estimated nuisances plugged in.  Target sampling
// variation is ignored (N much larger than n).
inline InfluenceTerms influence_terms(const CausalSiteData& d, const TargetMeans& tm, const NuisanceFits& f,
                                      const CausalBases& b = {}) {
  auto t = detail::evaluate(d, b, f);
  const Index n = d.X.rows();
  const double nn = static_cast<double>(n);
  Vector I1 = d.A, I0 = Vector::Ones(n) - d.A;
  Vector e0 = d.Y - t.m0, e1 = d.Y - t.m1;

  InfluenceTerms out;
  const Vector& wt = tm.outcome;
  Vector a0 = t.omega.cwiseProduct(I0).cwiseQuotient(Vector::Ones(n) - t.pi1);
  Vector a1 = t.omega.cwiseProduct(I1).cwiseQuotient(t.pi1);
  out.d_gamma0 = -wt + t.W.transpose() * a0 / nn;
  out.d_gamma1 = wt - t.W.transpose() * a1 / nn;
  out.d_eta = t.Wd.transpose() * t.omega.cwiseProduct(t.r) / nn;
  // d/dalpha of 1{A=1}/pi1 and -1{A=0}/(1 - pi1); zero where pi1 is clipped
  Vector ga(n);
  for (Index i = 0; i < n; ++i) {
    bool clipped = t.h(i) < kPropensityClip || t.h(i) > 1.0 - kPropensityClip;
    double hp = clipped ? 0.0 : t.h(i) * (1.0 - t.h(i));
    double p1 = t.pi1(i), p0 = 1.0 - p1;
    ga(i) = -t.omega(i) * hp * (I1(i) * e1(i) / (p1 * p1) + I0(i) * e0(i) / (p0 * p0));
  }
  out.d_alpha = t.Xa.transpose() * ga / nn;

  Matrix C0 = t.W.transpose() * I0.asDiagonal() * t.W / nn;
  Matrix C1 = t.W.transpose() * I1.asDiagonal() * t.W / nn;
  Matrix Ceta_neg = t.Wd.transpose() * t.omega.asDiagonal() * t.Wd / nn;  // -C_eta
  Vector hh = t.h.cwiseProduct(Vector::Ones(n) - t.h);
  Matrix Calpha = t.Xa.transpose() * hh.asDiagonal() * t.Xa / nn;

  Vector k0 = detail::spd_inverse(C0) * out.d_gamma0;
  Vector k1 = detail::spd_inverse(C1) * out.d_gamma1;
  Vector keta = -(detail::spd_inverse(Ceta_neg) * out.d_eta);
  Vector kalpha = detail::spd_inverse(Calpha) * out.d_alpha;
  const Vector& target_density_mean = tm.density;

  out.tau = t.omega.cwiseProduct(t.r);
  out.tau += (t.W * k0).cwiseProduct(I0).cwiseProduct(e0);
  out.tau += (t.W * k1).cwiseProduct(I1).cwiseProduct(e1);
  out.tau += t.omega.cwiseProduct(t.Wd * keta) - Vector::Constant(n, target_density_mean.dot(keta));
  out.tau += (t.Xa * kalpha).cwiseProduct(d.A - t.h);
  return out;
}

// Full per-site pipeline: nuisances, estimate, influence-function variance.
inline AteEstimate ate_site_estimate(const CausalSiteData& d, const TargetMeans& tm, const CausalBases& b = {}) {
  auto f = fit_nuisances(d, tm, b);
  auto e = dr_estimate(d, tm, f, b);
  auto inf = influence_terms(d, tm, f, b);
  Vector c = inf.tau.array() - inf.tau.mean();
  e.V = c.squaredNorm() / static_cast<double>(c.size());
  if (!(e.V > 0) || !std::isfinite(e.V)) throw NumericError("ate: influence-function variance is not positive");
  return e;
}

inline NuisanceFits fit_nuisances(const CausalSiteData& d, const Matrix& X_target, const CausalBases& b = {}) {
  return fit_nuisances(d, target_means(X_target, b), b);
}
inline AteEstimate dr_estimate(const CausalSiteData& d, const Matrix& X_target, const NuisanceFits& f,
                               const CausalBases& b = {}) {
  return dr_estimate(d, target_means(X_target, b), f, b);
}
inline InfluenceTerms influence_terms(const CausalSiteData& d, const Matrix& X_target, const NuisanceFits& f,
                                      const CausalBases& b = {}) {
  return influence_terms(d, target_means(X_target, b), f, b);
}
inline AteEstimate ate_site_estimate(const CausalSiteData& d, const Matrix& X_target, const CausalBases& b = {}) {
  return ate_site_estimate(d, target_means(X_target, b), b);
}

// Univariate path: sigma_l^2 = V_l / n_l, local differences only.
inline RiflInputs ate_inputs(const std::vector<AteEstimate>& est) {
  if (est.size() < 3) throw DomainError("ate_inputs: need at least 3 sites");
  RiflInputs in;
  for (std::size_t l = 0; l < est.size(); ++l)
    in.summaries.push_back(SiteSummary::univariate(static_cast<int>(l), est[l].theta, est[l].se(), est[l].n));
  in.table = local_dissimilarity(in.summaries, false);
  return in;
}

}  // namespace rifl
