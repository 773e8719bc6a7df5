#pragma once

#include <cmath>
#include <string>

#include "rifl/linalg.hpp"

namespace rifl::stats {

enum class Family { linear, logistic };

inline Family parse_family(const std::string& s) {
  if (s == "linear") return Family::linear;
  if (s == "logistic") return Family::logistic;
  throw DomainError("unknown family: " + s);
}

inline const char* family_name(Family f) { return f == Family::linear ? "linear" : "logistic"; }

struct GlmFit {
  Vector coef;
  // n * Var(coef): the asymptotic covariance C with sqrt(n)(coef - truth) -> N(0, C)
  Matrix covariance;
  Index n = 0;
  int iterations = 0;
  double dispersion = 1.0;
};

namespace detail {

inline Eigen::LLT<Matrix> factor_information(const Matrix& info) {
  Eigen::LLT<Matrix> llt(info);
  if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-13)) {
    throw SingularDesignError("design is rank deficient on the working weights");
  }
  return llt;
}

inline double logistic_deviance(const Vector& eta, const Vector& y, const Vector& w) {
  double dev = 0.0;
  for (Index i = 0; i < eta.size(); ++i) {
    double e = eta(i);
    // log(1 + exp(e)) - y e, computed stably
    double softplus = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
    dev += w(i) * (softplus - y(i) * e);
  }
  return 2.0 * dev;
}

}  // namespace detail

// Maximum (weighted) likelihood for the linear or logistic family.  Weights
// may be empty.  X must already contain any intercept column.
inline GlmFit irls_glm_fit(const Matrix& X, const Vector& y, Family family, const Vector& weights = Vector()) {
  const Index n = X.rows(), p = X.cols();
  if (y.size() != n) throw DomainError("irls_glm_fit: X and y disagree in length");
  if (n <= p) throw SingularDesignError("irls_glm_fit: fewer observations than coefficients");
  Vector w = weights.size() == 0 ? Vector::Ones(n) : weights;
  if (w.size() != n || (w.array() < 0).any()) throw DomainError("irls_glm_fit: invalid weights");
  const double wsum = w.sum();

  GlmFit fit;
  fit.n = n;
  if (family == Family::linear) {
    Matrix info = X.transpose() * w.asDiagonal() * X;
    auto llt = detail::factor_information(info);
    fit.coef = llt.solve(X.transpose() * (w.array() * y.array()).matrix());
    Vector r = y - X * fit.coef;
    fit.dispersion = (w.array() * r.array().square()).sum() / (wsum - static_cast<double>(p));
    fit.covariance = fit.dispersion * static_cast<double>(n) * llt.solve(Matrix::Identity(p, p));
    fit.iterations = 1;
    return fit;
  }

  for (Index i = 0; i < n; ++i) {
    if (y(i) != 0.0 && y(i) != 1.0) throw DomainError("irls_glm_fit: logistic response must be 0/1");
  }
  Vector beta = Vector::Zero(p);
  Vector eta = Vector::Zero(n);
  double dev = detail::logistic_deviance(eta, y, w);
  Eigen::LLT<Matrix> llt;
  for (int it = 1; it <= 100; ++it) {
    Vector mu(n), wt(n);
    for (Index i = 0; i < n; ++i) {
      mu(i) = expit(eta(i));
      wt(i) = w(i) * mu(i) * (1.0 - mu(i));
    }
    Vector grad = X.transpose() * (w.array() * (y - mu).array()).matrix();
    Matrix info = X.transpose() * wt.asDiagonal() * X;
    try {
      llt = detail::factor_information(info);
    } catch (const SingularDesignError&) {
      if (beta.norm() > 30) throw SeparationError("logistic fit diverges (separation)");
      throw;
    }
    Vector step = llt.solve(grad);
    // a vanishing gradient alone is not enough: under separation it decays
    // while the Newton step keeps growing
    if (grad.lpNorm<Eigen::Infinity>() / wsum <= 1e-10 &&
        step.lpNorm<Eigen::Infinity>() <= 1e-8 * (1.0 + beta.lpNorm<Eigen::Infinity>())) {
      fit.iterations = it - 1;
      break;
    }
    double t = 1.0;
    Vector cand, eta_c;
    double dev_c = 0;
    for (int h = 0; h < 40; ++h) {
      cand = beta + t * step;
      eta_c = X * cand;
      dev_c = detail::logistic_deviance(eta_c, y, w);
      if (dev_c <= dev + 1e-12 * std::fabs(dev)) break;
      t *= 0.5;
    }
    beta = cand;
    eta = eta_c;
    double change = dev - dev_c;
    dev = dev_c;
    if (beta.norm() > 1e3) throw SeparationError("logistic fit diverges (separation)");
    fit.iterations = it;
    if (it == 100) throw ConvergenceError("logistic IRLS did not converge in 100 iterations");
    if (change >= 0 && change < 1e-14 * (1 + std::fabs(dev)) && t < 1.0) break;
  }
  fit.coef = beta;
  Vector wt(n);
  for (Index i = 0; i < n; ++i) {
    double m = expit(eta(i));
    wt(i) = w(i) * m * (1.0 - m);
  }
  Matrix info = X.transpose() * wt.asDiagonal() * X;
  llt = detail::factor_information(info);
  fit.covariance = static_cast<double>(n) * llt.solve(Matrix::Identity(p, p));
  fit.covariance = 0.5 * (fit.covariance + fit.covariance.transpose()).eval();
  return fit;
}

}  // namespace rifl::stats
