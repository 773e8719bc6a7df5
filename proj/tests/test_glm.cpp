#include <catch_amalgamated.hpp>

#include <cmath>

#include "rifl/glm.hpp"
#include "rifl/newton.hpp"
#include "rifl/random.hpp"

using namespace rifl;
using rifl::stats::Family;

namespace {

Matrix normal_design(Index n, Index p, RandomStream& rng, double rho = 0.0) {
  Matrix x(n, p);
  for (Index i = 0; i < n; ++i) {
    double prev = rng.normal();
    x(i, 0) = prev;
    for (Index j = 1; j < p; ++j) {
      prev = rho * prev + std::sqrt(1 - rho * rho) * rng.normal();
      x(i, j) = prev;
    }
  }
  return x;
}

Vector logistic_response(const Matrix& x, const Vector& coef, RandomStream& rng) {
  Vector eta = x * coef, y(x.rows());
  for (Index i = 0; i < x.rows(); ++i) y(i) = rng.bernoulli(expit(eta(i))) ? 1.0 : 0.0;
  return y;
}

}  // namespace

TEST_CASE("linear fit reproduces an exact response") {
  Matrix x = Matrix::Identity(6, 3);
  x.bottomRows(3) = 2 * Matrix::Identity(3, 3);
  Vector theta(3);
  theta << 1.5, -2.0, 0.25;
  Vector y = x * theta;
  auto fit = stats::irls_glm_fit(x, y, Family::linear);
  CHECK((fit.coef - theta).norm() < 1e-12);
}

TEST_CASE("logistic fit is consistent at large n") {
  RandomStream rng(3, 0);
  Matrix x = with_intercept(normal_design(100000, 3, rng, 0.5));
  Vector theta(4);
  theta << 0.2, 0.8, -0.5, 0.3;
  Vector y = logistic_response(x, theta, rng);
  auto fit = stats::irls_glm_fit(x, y, Family::logistic);
  for (Index j = 0; j < 4; ++j) {
    double se = std::sqrt(fit.covariance(j, j) / fit.n);
    CHECK(std::fabs(fit.coef(j) - theta(j)) < 3 * se);
  }
  CHECK(is_spd(fit.covariance));
  // score equation solved
  Vector mu = (x * fit.coef).unaryExpr([](double t) { return expit(t); });
  CHECK((x.transpose() * (y - mu)).lpNorm<Eigen::Infinity>() / fit.n <= 1e-8);
}

TEST_CASE("logistic covariance agrees with a nonparametric bootstrap") {
  RandomStream rng(4, 0);
  const Index n = 2000;
  Matrix x = with_intercept(normal_design(n, 3, rng, 0.6));
  Vector theta(4);
  theta << 0.1, 0.5, 0.5, -0.4;
  Vector y = logistic_response(x, theta, rng);
  auto fit = stats::irls_glm_fit(x, y, Family::logistic);

  const int B = 500;
  Matrix draws(B, 4);
  RandomStream boot(4, 1);
  for (int b = 0; b < B; ++b) {
    Matrix xb(n, 4);
    Vector yb(n);
    for (Index i = 0; i < n; ++i) {
      auto r = static_cast<Index>(boot.below(n));
      xb.row(i) = x.row(r);
      yb(i) = y(r);
    }
    draws.row(b) = stats::irls_glm_fit(xb, yb, Family::logistic).coef.transpose();
  }
  Matrix centered = draws.rowwise() - draws.colwise().mean();
  Matrix boot_cov = centered.transpose() * centered / (B - 1) * static_cast<double>(n);
  // Variances are compared as ratios.  Off-diagonal covariances have no
  // stable ratio at 500 replicates (relative MC error ~0.1 at |corr| = 0.5),
  // so they are compared on the correlation scale instead.
  for (Index i = 0; i < 4; ++i) {
    double ratio = fit.covariance(i, i) / boot_cov(i, i);
    INFO("variance " << i << " ratio " << ratio);
    CHECK(ratio >= 0.85);
    CHECK(ratio <= 1.15);
    for (Index j = 0; j < i; ++j) {
      double c_fit = fit.covariance(i, j) / std::sqrt(fit.covariance(i, i) * fit.covariance(j, j));
      double c_boot = boot_cov(i, j) / std::sqrt(boot_cov(i, i) * boot_cov(j, j));
      INFO("correlation " << i << "," << j << ": " << c_fit << " vs " << c_boot);
      CHECK(std::fabs(c_fit - c_boot) < 0.1);
    }
  }
}

TEST_CASE("rank deficiency and separation are reported") {
  Matrix x(5, 2);
  x << 1, 2, 1, 2, 1, 2, 1, 2, 1, 2;
  Vector y(5);
  y << 0, 1, 0, 1, 1;
  CHECK_THROWS_AS(stats::irls_glm_fit(x, y, Family::linear), SingularDesignError);
  Matrix xs(6, 2);
  xs << 1, -3, 1, -2, 1, -1, 1, 1, 1, 2, 1, 3;
  Vector ys(6);
  ys << 0, 0, 0, 1, 1, 1;
  CHECK_THROWS_AS(stats::irls_glm_fit(xs, ys, Family::logistic), SeparationError);
}

TEST_CASE("newton solves a linear residual in one step") {
  Vector a(3);
  a << 1, -2, 3;
  int calls = 0;
  auto r = [&](const Vector& x) {
    ++calls;
    return Vector(x - a);
  };
  auto J = [](const Vector& x) { return Matrix(Matrix::Identity(x.size(), x.size())); };
  Vector root = stats::newton_solve(r, J, Vector::Zero(3));
  CHECK((root - a).norm() == 0.0);
  CHECK(calls == 2);
}

namespace {

// avg(exp(eta'w) w) - target for w = (1, x)
struct TiltEquation {
  Vector x;
  double target_mean;
  Vector operator()(const Vector& eta) const {
    Vector r = Vector::Zero(2);
    for (Index i = 0; i < x.size(); ++i) {
      double e = std::exp(eta(0) + eta(1) * x(i));
      r(0) += e;
      r(1) += e * x(i);
    }
    r /= static_cast<double>(x.size());
    r(0) -= 1.0;
    r(1) -= target_mean;
    return r;
  }
  Matrix jacobian(const Vector& eta) const {
    Matrix j = Matrix::Zero(2, 2);
    for (Index i = 0; i < x.size(); ++i) {
      double e = std::exp(eta(0) + eta(1) * x(i));
      j(0, 0) += e;
      j(0, 1) += e * x(i);
      j(1, 1) += e * x(i) * x(i);
    }
    j(1, 0) = j(0, 1);
    return j / static_cast<double>(x.size());
  }
};

}  // namespace

TEST_CASE("exponential tilt without shift solves to zero") {
  RandomStream rng(9, 0);
  Vector x(4000);
  for (auto& v : x) v = rng.normal();
  TiltEquation eq{x, x.mean()};
  Vector root = stats::newton_solve(eq, [&](const Vector& e) { return eq.jacobian(e); }, Vector::Zero(2));
  CHECK(root.norm() < 1e-3);
  CHECK(eq(root).lpNorm<Eigen::Infinity>() <= 1e-9);
}

TEST_CASE("exponential tilt under a mean shift matches a grid-search oracle") {
  RandomStream rng(10, 0);
  Vector x(3000);
  for (auto& v : x) v = rng.normal();
  TiltEquation eq{x, 0.4};
  Vector root = stats::newton_solve(eq, [&](const Vector& e) { return eq.jacobian(e); }, Vector::Zero(2));

  // profile out the intercept: tilted mean of x as a function of the slope
  auto tilted_mean = [&](double s) {
    double num = 0, den = 0;
    for (Index i = 0; i < x.size(); ++i) {
      double e = std::exp(s * x(i));
      num += e * x(i);
      den += e;
    }
    return num / den;
  };
  double lo = -3, hi = 3;
  for (int round = 0; round < 6; ++round) {
    double best = lo, gap = 1e300, step = (hi - lo) / 1000;
    for (int k = 0; k <= 1000; ++k) {
      double s = lo + k * step;
      double g = std::fabs(tilted_mean(s) - 0.4);
      if (g < gap) gap = g, best = s;
    }
    lo = best - step;
    hi = best + step;
  }
  double slope = 0.5 * (lo + hi);
  double mean_exp = 0;
  for (Index i = 0; i < x.size(); ++i) mean_exp += std::exp(slope * x(i));
  double intercept = -std::log(mean_exp / x.size());
  CHECK(std::fabs(root(1) - slope) < 1e-4);
  CHECK(std::fabs(root(0) - intercept) < 1e-4);
}
