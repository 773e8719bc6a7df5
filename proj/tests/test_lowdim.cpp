#include <catch_amalgamated.hpp>

#include <cmath>

#include "rifl/distributions.hpp"
#include "rifl/lowdim.hpp"
#include "rifl/random.hpp"

using namespace rifl;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

ParametricSiteFit make_fit(Vector theta, Matrix C, long n) {
  ParametricSiteFit f;
  f.theta = std::move(theta);
  f.C = std::move(C);
  f.n = n;
  return f;
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

// central differences of the functional value
Matrix numeric_jacobian(const Functional& g, const Vector& theta) {
  const double h = 1e-6;
  Matrix J(g.dim(), theta.size());
  for (Index j = 0; j < theta.size(); ++j) {
    Vector up = theta, dn = theta;
    up(j) += h;
    dn(j) -= h;
    J.col(j) = (g.value(up) - g.value(dn)) / (2 * h);
  }
  return J;
}

}  // namespace

TEST_CASE("delta method standard errors") {
  auto f = make_fit(vec({0.3, -0.2}), Matrix::Identity(2, 2), 100);
  CHECK_THAT(delta_method_summary(f, Functional::coordinate(0)).sigma(), WithinAbs(0.1, 1e-15));

  auto f2 = make_fit(vec({0.3, -0.2}), Matrix::Identity(2, 2), 400);
  auto lin = delta_method_summary(f2, Functional::linear(vec({1, 1})));
  CHECK_THAT(lin.sigma(), WithinAbs(std::sqrt(2.0) / 20, 1e-15));
  CHECK_THAT(lin.point(), WithinAbs(0.1, 1e-15));

  auto f3 = make_fit(vec({1, 0}), Matrix::Identity(2, 2), 100);
  auto q = delta_method_summary(f3, Functional::quadratic_norm());
  CHECK_THAT(q.sigma(), WithinAbs(0.2, 1e-15));
  CHECK_THAT(q.point(), WithinAbs(1.0, 1e-15));

  auto sub = delta_method_summary(f3, Functional::subvector({1, 0}));
  REQUIRE(sub.dim() == 2);
  CHECK(sub.beta(0) == 0.0);
  CHECK(sub.beta(1) == 1.0);
  CHECK_THAT(sub.omega(0, 0), WithinAbs(0.01, 1e-15));

  auto zero = make_fit(vec({0, 0}), Matrix::Identity(2, 2), 100);
  CHECK_THROWS_AS(delta_method_summary(zero, Functional::quadratic_norm()), DegenerateFunctionalError);
  CHECK_THROWS_AS(delta_method_summary(zero, Functional::coordinate(5)), DomainError);
}

TEST_CASE("functional gradients agree with central differences") {
  RandomStream rng(11, 0);
  for (int rep = 0; rep < 20; ++rep) {
    Vector theta(5), x(5);
    for (Index j = 0; j < 5; ++j) {
      theta(j) = rng.normal();
      x(j) = rng.normal();
    }
    for (const auto& g : {Functional::coordinate(3), Functional::subvector({0, 4}), Functional::linear(x),
                          Functional::quadratic_norm()}) {
      Matrix exact = g.jacobian(theta), approx = numeric_jacobian(g, theta);
      double rel = (exact - approx).norm() / std::max(1.0, exact.norm());
      CHECK(rel <= 1e-6);
    }
  }
}

TEST_CASE("low-dimensional squared distance and its standard error") {
  auto a = make_fit(vec({0.5, 0.2}), Matrix::Identity(2, 2), 200);
  auto same = dissimilarity_lowdim(a, a);
  CHECK(same.value == 0.0);
  CHECK_THAT(same.se, WithinAbs(std::sqrt(1.0 / 200), 1e-15));

  auto b = make_fit(vec({1, 0}), Matrix::Identity(2, 2), 100);
  auto c = make_fit(vec({0, 0}), Matrix::Identity(2, 2), 100);
  auto d = dissimilarity_lowdim(b, c);
  CHECK_THAT(d.value, WithinAbs(1.0, 1e-15));
  CHECK_THAT(d.se, WithinAbs(0.3, 1e-14));

  auto e = make_fit(vec({0.1, 0.7}), Matrix{{2.0, 0.3}, {0.3, 1.0}}, 150);
  auto de = dissimilarity_lowdim(b, e), ed = dissimilarity_lowdim(e, b);
  CHECK(de.value == ed.value);
  CHECK(de.se == ed.se);
  CHECK(de.se >= std::sqrt(1.0 / 100));
  CHECK_THROWS_AS(dissimilarity_lowdim(a, make_fit(vec({1, 2, 3}), Matrix::Identity(3, 3), 10)), DomainError);
}

TEST_CASE("distance statistic is calibrated under equal parameters") {
  // theta_hat ~ N(theta, C/n) at both sites with a common theta
  const int reps = 2000;
  const long n = 1000;
  Matrix C{{1.0, 0.6, 0.36}, {0.6, 1.0, 0.6}, {0.36, 0.6, 1.0}};
  Matrix root = C.llt().matrixL();
  Vector theta = vec({0.5, 0.5, 0.1});
  RandomStream rng(21, 0);
  auto draw = [&] {
    Vector z(3);
    for (Index j = 0; j < 3; ++j) z(j) = rng.normal();
    return Vector(theta + root * z / std::sqrt(static_cast<double>(n)));
  };
  const double alpha = 0.05, z = stats::normal_quantile(alpha);
  int exceed = 0;
  for (int r = 0; r < reps; ++r) {
    auto d = dissimilarity_lowdim(make_fit(draw(), C, n), make_fit(draw(), C, n));
    exceed += std::fabs(d.value) / d.se >= z;
  }
  CHECK(static_cast<double>(exceed) / reps <= alpha + 0.02);
}

TEST_CASE("parametric site fit drops the intercept block") {
  RandomStream rng(5, 0);
  const Index n = 3000;
  Matrix X(n, 2);
  Vector y(n);
  for (Index i = 0; i < n; ++i) {
    X(i, 0) = rng.normal();
    X(i, 1) = rng.normal();
    y(i) = rng.bernoulli(expit(0.2 + 0.5 * X(i, 0) - 0.3 * X(i, 1))) ? 1.0 : 0.0;
  }
  auto full = stats::irls_glm_fit(with_intercept(X), y, stats::Family::logistic);
  auto f = fit_parametric_site(X, y, stats::Family::logistic);
  REQUIRE(f.theta.size() == 2);
  CHECK(f.theta == full.coef.tail(2));
  CHECK(f.C == full.covariance.bottomRightCorner(2, 2));
  CHECK(f.n == n);
  auto g = fit_parametric_site(X, y, stats::Family::logistic, true);
  CHECK(g.theta.size() == 3);
}

TEST_CASE("lowdim table carries both global and local parts") {
  std::vector<ParametricSiteFit> fits = {make_fit(vec({0.5, 0.1}), Matrix::Identity(2, 2), 500),
                                         make_fit(vec({0.5, 0.1}), Matrix::Identity(2, 2), 500),
                                         make_fit(vec({0.2, 0.1}), Matrix::Identity(2, 2), 400)};
  auto in = lowdim_table(fits, Functional::coordinate(0));
  REQUIRE(in.table.has_global());
  CHECK(in.table.global()[0] == 0.0);
  CHECK_THAT(in.table.global()[1], WithinAbs(0.09, 1e-15));
  CHECK_THAT(in.table.local()[1], WithinAbs(0.3, 1e-15));
  CHECK_THAT(in.table.se_local()[1], WithinRel(std::sqrt(1.0 / 500 + 1.0 / 400), 1e-14));
  CHECK(in.summaries[2].site_id == 2);
}
