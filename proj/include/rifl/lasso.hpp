#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "rifl/glm.hpp"
#include "rifl/random.hpp"

namespace rifl {

// l1-penalized GLM with an unpenalized intercept.  Losses are averaged:
//   linear    (1/2n) |y - mu - X theta|^2
//   logistic  (1/n)  sum log(1 + e^eta) - y eta
// so an orthonormal (X'X = n I) linear design soft-thresholds OLS at lambda.
struct LassoFit {
  double intercept = 0.0;
  Vector coef;
  double lambda = 0.0;
  int sweeps = 0;

  Index nonzeros() const { return (coef.array() != 0.0).count(); }
};

struct LassoOptions {
  int folds = 5;
  int path_length = 50;
  double min_ratio = 0.01;
  double kkt_tol = 1e-6;
  int max_sweeps = 100000;
};

struct LassoCvResult {
  LassoFit fit;
  std::vector<double> lambdas;
  std::vector<double> cv_error;
  std::size_t best = 0;
};

namespace detail {

inline double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

// Largest KKT violation given the coefficient gradient (1/n) X'(residual).
inline double kkt_violation(const Vector& grad, const Vector& coef, double lambda) {
  double worst = 0.0;
  for (Index j = 0; j < coef.size(); ++j) {
    double v = coef(j) == 0.0 ? std::max(std::fabs(grad(j)) - lambda, 0.0)
                              : std::fabs(grad(j) - lambda * (coef(j) > 0 ? 1.0 : -1.0));
    worst = std::max(worst, v);
  }
  return worst;
}

// Centered sufficient statistics of a linear problem: G = Xc'Xc/n, c = Xc'yc/n.
struct GramProblem {
  Matrix G;
  Vector c;
  Vector xbar;
  double ybar = 0.0;
};

struct RawSums {
  Matrix xx;
  Vector x, xy;
  double y = 0.0;
  double n = 0.0;

  static RawSums of(const Matrix& X, const Vector& y) {
    RawSums s;
    s.xx = X.transpose() * X;
    s.x = X.colwise().sum().transpose();
    s.xy = X.transpose() * y;
    s.y = y.sum();
    s.n = static_cast<double>(X.rows());
    return s;
  }

  RawSums minus(const RawSums& o) const {
    RawSums s;
    s.xx = xx - o.xx;
    s.x = x - o.x;
    s.xy = xy - o.xy;
    s.y = y - o.y;
    s.n = n - o.n;
    return s;
  }

  GramProblem centered() const {
    GramProblem p;
    p.xbar = x / n;
    p.ybar = y / n;
    p.G = xx / n - p.xbar * p.xbar.transpose();
    p.c = xy / n - p.xbar * p.ybar;
    return p;
  }
};

// Covariance-update coordinate descent; theta is the warm start.
inline int gram_descent(const GramProblem& p, double lambda, Vector& theta, double kkt_tol, int max_sweeps) {
  const Index d = p.G.rows();
  Vector grad = p.c - p.G * theta;
  auto update = [&](Index j) {
    double gjj = p.G(j, j);
    if (!(gjj > 1e-14)) return 0.0;
    double old = theta(j);
    double nw = soft_threshold(grad(j) + gjj * old, lambda) / gjj;
    if (nw == old) return 0.0;
    grad -= p.G.col(j) * (nw - old);
    theta(j) = nw;
    return std::fabs(nw - old) * std::sqrt(gjj);
  };
  const double tol = 1e-3 * kkt_tol;
  for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
    double change = 0.0;
    for (Index j = 0; j < d; ++j) change = std::max(change, update(j));
    if (change < tol) {
      grad = p.c - p.G * theta;  // refresh accumulated rounding
      if (kkt_violation(grad, theta, lambda) <= 0.1 * kkt_tol) return sweep;
      continue;
    }
    // settle the active set before the next full sweep
    std::vector<Index> active;
    for (Index j = 0; j < d; ++j)
      if (theta(j) != 0.0) active.push_back(j);
    for (int inner = 0; inner < max_sweeps; ++inner) {
      double c = 0.0;
      for (Index j : active) c = std::max(c, update(j));
      if (c < tol) break;
    }
  }
  throw ConvergenceError("lasso coordinate descent did not reach the KKT tolerance");
}

inline double logistic_objective(const Vector& eta, const Vector& y, const Vector& coef, double lambda) {
  double s = 0.0;
  for (Index i = 0; i < eta.size(); ++i) {
    double e = eta(i);
    s += (e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e))) - y(i) * e;
  }
  return s / static_cast<double>(eta.size()) + lambda * coef.lpNorm<1>();
}

// Proximal Newton: weighted-lasso coordinate descent on the quadratic model,
// then a backtracking step on the true objective.
inline int logistic_descent(const Matrix& X, const Vector& y, double lambda, double& mu, Vector& theta,
                            double kkt_tol, int max_sweeps) {
  const Index n = X.rows(), d = X.cols();
  const double nd = static_cast<double>(n);
  Vector eta = (X * theta).array() + mu;
  double obj = logistic_objective(eta, y, theta, lambda);
  int sweeps = 0;
  for (int outer = 0; outer < 200; ++outer) {
    Vector p = eta.unaryExpr([](double t) { return expit(t); });
    Vector resid = y - p;
    Vector grad = X.transpose() * resid / nd;
    if (std::fabs(resid.sum() / nd) <= 0.1 * kkt_tol && kkt_violation(grad, theta, lambda) <= 0.1 * kkt_tol)
      return sweeps;

    Vector w = (p.array() * (1.0 - p.array())).max(1e-5).matrix();
    Vector z = eta + (resid.array() / w.array()).matrix();
    double m2 = mu;
    Vector t2 = theta;
    Vector r = z - eta;  // working residual z - m2 - X t2
    Vector xwx(d);
    for (Index j = 0; j < d; ++j) xwx(j) = (w.array() * X.col(j).array().square()).sum() / nd;
    const double wsum = w.sum();
    for (int inner = 0; inner < 1000; ++inner) {
      ++sweeps;
      double dm = (w.array() * r.array()).sum() / wsum;
      m2 += dm;
      r.array() -= dm;
      double change = std::fabs(dm);
      for (Index j = 0; j < d; ++j) {
        if (!(xwx(j) > 1e-14)) continue;
        double old = t2(j);
        double num = (w.array() * X.col(j).array() * r.array()).sum() / nd + xwx(j) * old;
        double nw = soft_threshold(num, lambda) / xwx(j);
        if (nw != old) {
          r -= X.col(j) * (nw - old);
          t2(j) = nw;
          change = std::max(change, std::fabs(nw - old) * std::sqrt(xwx(j)));
        }
      }
      if (change < 1e-3 * kkt_tol) break;
    }
    if (sweeps > max_sweeps) break;

    double step = 1.0;
    for (int h = 0; h < 40; ++h) {
      double mc = mu + step * (m2 - mu);
      Vector tc = theta + step * (t2 - theta);
      Vector ec = (X * tc).array() + mc;
      double oc = logistic_objective(ec, y, tc, lambda);
      if (oc <= obj + 1e-15 * std::fabs(obj)) {
        mu = mc;
        theta = tc;
        eta = ec;
        obj = oc;
        break;
      }
      step *= 0.5;
    }
    if (theta.norm() > 1e4) throw SeparationError("penalized logistic fit diverges");
  }
  throw ConvergenceError("penalized logistic fit did not reach the KKT tolerance");
}

}  // namespace detail

inline double lasso_lambda_max(const Matrix& X, const Vector& y) {
  Vector yc = y.array() - y.mean();
  return (X.transpose() * yc).lpNorm<Eigen::Infinity>() / static_cast<double>(X.rows());
}

// Largest KKT violation of a fit (intercept stationarity included).
inline double lasso_kkt_residual(const Matrix& X, const Vector& y, stats::Family family, const LassoFit& f) {
  Vector eta = (X * f.coef).array() + f.intercept;
  Vector resid = family == stats::Family::linear ? Vector(y - eta)
                                                 : Vector(y - eta.unaryExpr([](double t) { return expit(t); }));
  Vector grad = X.transpose() * resid / static_cast<double>(X.rows());
  return std::max(std::fabs(resid.mean()), detail::kkt_violation(grad, f.coef, f.lambda));
}

inline LassoFit lasso_fit_lambda(const Matrix& X, const Vector& y, stats::Family family, double lambda,
                                 const LassoOptions& opt = {}, const LassoFit* warm = nullptr) {
  if (X.rows() != y.size()) throw DomainError("lasso: X and y disagree in length");
  if (!(lambda >= 0)) throw DomainError("lasso: lambda must be nonnegative");
  LassoFit f;
  f.lambda = lambda;
  f.coef = warm ? warm->coef : Vector::Zero(X.cols());
  if (family == stats::Family::linear) {
    auto p = detail::RawSums::of(X, y).centered();
    f.sweeps = detail::gram_descent(p, lambda, f.coef, opt.kkt_tol, opt.max_sweeps);
    f.intercept = p.ybar - p.xbar.dot(f.coef);
  } else {
    double ybar = y.mean();
    if (ybar <= 0.0 || ybar >= 1.0) throw SeparationError("penalized logistic fit needs both outcome classes");
    f.intercept = warm ? warm->intercept : std::log(ybar / (1 - ybar));
    f.sweeps = detail::logistic_descent(X, y, lambda, f.intercept, f.coef, opt.kkt_tol, opt.max_sweeps);
  }
  return f;
}

inline std::vector<double> lasso_lambda_path(double lambda_max, const LassoOptions& opt) {
  std::vector<double> out(static_cast<std::size_t>(opt.path_length));
  for (int i = 0; i < opt.path_length; ++i)
    out[i] = lambda_max * std::pow(opt.min_ratio, static_cast<double>(i) / (opt.path_length - 1));
  return out;
}

// lambda by K-fold cross-validation (held-out squared error or deviance),
// then a refit on all rows at the selected lambda.
inline LassoCvResult lasso_cv(const Matrix& X, const Vector& y, stats::Family family, RandomStream& rng,
                              const LassoOptions& opt = {}) {
  const Index n = X.rows(), d = X.cols();
  if (n < 20 || d < 1) throw DomainError("lasso_cv: need n >= 20 and d >= 1");
  if (opt.folds < 2 || opt.path_length < 2) throw DomainError("lasso_cv: need at least two folds and two lambdas");
  LassoCvResult out;
  double lmax = lasso_lambda_max(X, y);
  if (!(lmax > 0)) lmax = 1e-12;
  out.lambdas = lasso_lambda_path(lmax, opt);
  out.cv_error.assign(out.lambdas.size(), 0.0);

  std::vector<Index> perm(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) perm[i] = i;
  rng.shuffle(perm);
  std::vector<std::vector<Index>> held(static_cast<std::size_t>(opt.folds)), train(held.size());
  for (Index i = 0; i < n; ++i) held[static_cast<std::size_t>(i % opt.folds)].push_back(perm[i]);
  for (int f = 0; f < opt.folds; ++f) {
    std::sort(held[f].begin(), held[f].end());
    std::vector<char> in(static_cast<std::size_t>(n), 0);
    for (Index i : held[f]) in[i] = 1;
    for (Index i = 0; i < n; ++i)
      if (!in[i]) train[f].push_back(i);
  }

  auto all = family == stats::Family::linear ? detail::RawSums::of(X, y) : detail::RawSums();
  for (int f = 0; f < opt.folds; ++f) {
    Matrix Xh = take_rows(X, held[f]);
    Vector yh = take(y, held[f]);
    LassoFit cur;
    cur.coef = Vector::Zero(d);
    if (family == stats::Family::linear) {
      auto p = all.minus(detail::RawSums::of(Xh, yh)).centered();
      for (std::size_t k = 0; k < out.lambdas.size(); ++k) {
        detail::gram_descent(p, out.lambdas[k], cur.coef, opt.kkt_tol, opt.max_sweeps);
        Vector r = yh - ((Xh * cur.coef).array() + (p.ybar - p.xbar.dot(cur.coef))).matrix();
        out.cv_error[k] += r.squaredNorm();
      }
    } else {
      Matrix Xt = take_rows(X, train[f]);
      Vector yt = take(y, train[f]);
      const LassoFit* warm = nullptr;
      for (std::size_t k = 0; k < out.lambdas.size(); ++k) {
        cur = lasso_fit_lambda(Xt, yt, family, out.lambdas[k], opt, warm);
        warm = &cur;
        Vector eta = (Xh * cur.coef).array() + cur.intercept;
        double dev = 0.0;
        for (Index i = 0; i < eta.size(); ++i) {
          double e = eta(i);
          dev += (e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e))) - yh(i) * e;
        }
        out.cv_error[k] += 2.0 * dev;
      }
    }
  }
  for (double& e : out.cv_error) e /= static_cast<double>(n);
  out.best = static_cast<std::size_t>(std::min_element(out.cv_error.begin(), out.cv_error.end()) - out.cv_error.begin());

  // refit along the path down to the chosen lambda for a good warm start
  LassoFit cur;
  cur.coef = Vector::Zero(d);
  if (family == stats::Family::linear) {
    // same Gram problem lasso_fit_lambda would build, computed once
    auto p = all.centered();
    for (std::size_t k = 0; k <= out.best; ++k)
      cur.sweeps = detail::gram_descent(p, out.lambdas[k], cur.coef, opt.kkt_tol, opt.max_sweeps);
    cur.lambda = out.lambdas[out.best];
    cur.intercept = p.ybar - p.xbar.dot(cur.coef);
    out.fit = cur;
    return out;
  }
  const LassoFit* warm = nullptr;
  for (std::size_t k = 0; k <= out.best; ++k) {
    cur = lasso_fit_lambda(X, y, family, out.lambdas[k], opt, warm);
    warm = &cur;
  }
  out.fit = cur;
  return out;
}

}  // namespace rifl
