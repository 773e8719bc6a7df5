#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "rifl/distributions.hpp"
#include "rifl/highdim.hpp"

using namespace rifl;
using rifl::stats::Family;

namespace {

// AR(1) rows, correlation rho, marginal variance `scale`.
Matrix ar1(Index n, Index p, double rho, double scale, RandomStream& rng) {
  Matrix x(n, p);
  const double s = std::sqrt(scale);
  for (Index i = 0; i < n; ++i) {
    double prev = rng.normal();
    x(i, 0) = s * prev;
    for (Index j = 1; j < p; ++j) {
      prev = rho * prev + std::sqrt(1 - rho * rho) * rng.normal();
      x(i, j) = s * prev;
    }
  }
  return x;
}

// Majority coefficients theta_j = 0.1 j - 0.6 on the first 11 coordinates.
Vector sparse_theta(Index d) {
  Vector t = Vector::Zero(d);
  for (int j = 1; j <= std::min<Index>(d, 11); ++j) t(j - 1) = 0.1 * j - 0.6;
  return t;
}

Vector linear_response(const Matrix& X, const Vector& theta, double mu, RandomStream& rng) {
  Vector y = (X * theta).array() + mu;
  for (Index i = 0; i < y.size(); ++i) y(i) += rng.normal();
  return y;
}

}  // namespace

TEST_CASE("sample split is a disjoint cover with the larger half first") {
  RandomStream rng(1, 0);
  for (Index n : {20, 21, 101}) {
    auto [s1, s2] = split_half(n, rng);
    CHECK(static_cast<Index>(s1.size()) == (n + 1) / 2);
    CHECK(static_cast<Index>(s1.size() + s2.size()) == n);
    std::vector<Index> all(s1);
    all.insert(all.end(), s2.begin(), s2.end());
    std::sort(all.begin(), all.end());
    for (Index i = 0; i < n; ++i) CHECK(all[i] == i);
  }
}

TEST_CASE("the penalized fit reads only the first half") {
  RandomStream rng(2, 0);
  const Index n = 200, d = 40;
  Matrix X = ar1(n, d, 0.6, 0.5, rng);
  Vector y = linear_response(X, sparse_theta(d), 0.05, rng);
  RandomStream s_a(3, 0), f_a(3, 1);
  HighDimSite a(X, y, Family::linear, s_a, f_a);

  // scramble everything the fit must not see
  Matrix X2 = X;
  Vector y2 = y;
  for (Index i : a.second_half()) {
    y2(i) = 100.0 * rng.normal();
    X2.row(i).setConstant(7.0);
  }
  RandomStream s_b(3, 0), f_b(3, 1);
  HighDimSite b(X2, y2, Family::linear, s_b, f_b);
  CHECK(b.first_half() == a.first_half());
  CHECK(b.fit().theta_tilde == a.fit().theta_tilde);
  CHECK(b.fit().mu_tilde == a.fit().mu_tilde);
  // and the bias step sees the second half only
  CHECK(b.round1().beta_hat != a.round1().beta_hat);
}

TEST_CASE("bias components vanish with zero residuals and match the linear formula") {
  RandomStream rng(4, 0);
  const Index n2 = 150, d = 30;
  Matrix X = ar1(n2, d, 0.6, 0.5, rng);
  HighDimFit fit;
  fit.theta_tilde = sparse_theta(d);
  fit.mu_tilde = 0.3;
  Vector exact = (X * fit.theta_tilde).array() + fit.mu_tilde;
  HighDimConfig cfg;
  Vector gamma = Vector::Zero(d + 1);
  gamma.segment(1, 4) << 0.2, -0.1, 0.05, 0.3;

  BiasContext zero(X, exact, Family::linear, fit, cfg);
  auto b0 = zero.components(gamma);
  CHECK(b0.delta == 0.0);
  CHECK(b0.V == 0.0);

  Vector y = exact;
  for (Index i = 0; i < n2; ++i) y(i) += rng.normal();
  BiasContext ctx(X, y, Family::linear, fit, cfg);
  auto b = ctx.components(gamma);
  Vector resid = y - exact;
  double by_hand = b.u.dot(with_intercept(X).transpose() * resid) / static_cast<double>(n2);
  CHECK(std::fabs(b.delta - by_hand) <= 1e-12 * std::max(1.0, std::fabs(by_hand)));
  CHECK(b.V > 0.0);
  CHECK(ctx.lambda() == Catch::Approx(1.1 * std::sqrt(std::log(30.0) / 150.0)));
  CHECK(ctx.tau() == Catch::Approx(std::sqrt(2 * std::log(150.0))));

  auto none = ctx.components(Vector::Zero(d + 1));
  CHECK(none.u.isZero(0.0));
  CHECK(none.delta == 0.0);
}

TEST_CASE("distance estimate truncates at zero, is symmetric and keeps the SE floor") {
  Vector a(3), b(3);
  a << 0.1, 0.2, 0.3;
  b << 0.1, 0.2, 0.3;
  BiasComponents lk, kl;
  lk.delta = -0.1;
  kl.delta = -0.05;  // raw = 0 - 0.2 - 0.1 = -0.3
  auto d = dissimilarity_highdim(a, b, lk, kl, 400, 900);
  CHECK(d.value == 0.0);
  CHECK(d.se == Catch::Approx(std::sqrt(1.0 / 400)));

  BiasComponents zero;
  auto z = dissimilarity_highdim(a, b, zero, zero, 100, 100);
  CHECK(z.value == 0.0);
  CHECK(z.se >= std::sqrt(1.0 / 100));

  b << 0.5, -0.2, 0.0;
  lk.delta = 0.01;
  lk.V = 0.002;
  kl.delta = -0.02;
  kl.V = 0.003;
  auto f = dissimilarity_highdim(a, b, lk, kl, 300, 500);
  auto r = dissimilarity_highdim(b, a, kl, lk, 500, 300);
  CHECK(f.value == r.value);
  CHECK(f.se == r.se);
  CHECK(f.value == Catch::Approx((a - b).squaredNorm() + 2 * 0.01 - 2 * 0.02));
  CHECK(f.se == Catch::Approx(std::sqrt(4 * 0.002 + 4 * 0.003 + 1.0 / 300)));
  CHECK(f.se >= std::sqrt(1.0 / 300));
}

TEST_CASE("low-dimensional limit agrees with least squares") {
  RandomStream rng(5, 0);
  const Index n = 800, d = 10;
  Matrix X = ar1(n, d, 0.6, 0.5, rng);
  Vector y = linear_response(X, sparse_theta(d), 0.05, rng);
  HighDimConfig cfg;
  cfg.target = 4;
  RandomStream s(5, 1), f(5, 2);
  HighDimSite site(X, y, Family::linear, s, f, cfg);
  auto ols = stats::irls_glm_fit(with_intercept(X), y, Family::linear);
  const auto& r1 = site.round1();
  INFO("debiased " << r1.beta_hat << " ols " << ols.coef(5) << " se " << r1.beta_se);
  CHECK(std::fabs(r1.beta_hat - ols.coef(5)) <= 2 * r1.beta_se);
}

TEST_CASE("variance component is close to the inverse-covariance oracle when d is small", "[calibration]") {
  RandomStream rng(6, 0);
  const Index n = 1000, d = 20;
  Matrix X = ar1(n, d, 0.6, 0.5, rng);
  Vector y = linear_response(X, sparse_theta(d), 0.05, rng);
  HighDimConfig cfg;
  cfg.target = 10;
  RandomStream s(6, 1), f(6, 2);
  HighDimSite site(X, y, Family::linear, s, f, cfg);

  Matrix X2 = with_intercept(take_rows(X, site.second_half()));
  Vector y2 = take(y, site.second_half());
  const double n2 = static_cast<double>(X2.rows());
  Matrix S = X2.transpose() * X2 / n2;
  Vector resid = y2.array() - site.fit().mu_tilde - (X2.rightCols(d) * site.fit().theta_tilde).array();
  double sigma2 = resid.squaredNorm() / n2;
  for (Index j : {Index(0), Index(10), Index(15)}) {
    Vector e = Vector::Zero(d + 1);
    e(j + 1) = 1.0;
    Vector u = S.ldlt().solve(e);
    double oracle = sigma2 * u.dot(S * u) / n2;
    auto b = site.context().components(e);
    INFO("coordinate " << j << " V " << b.V << " oracle " << oracle);
    CHECK(b.V >= 0.5 * oracle);
    CHECK(b.V <= 2.0 * oracle);
  }
}

TEST_CASE("logistic sites give finite debiased estimates") {
  RandomStream rng(7, 0);
  const Index n = 400, d = 50;
  Matrix X = ar1(n, d, 0.6, 0.5, rng);
  Vector eta = X * sparse_theta(d), y(n);
  for (Index i = 0; i < n; ++i) y(i) = rng.bernoulli(expit(eta(i))) ? 1.0 : 0.0;
  HighDimConfig cfg;
  cfg.target = 10;
  RandomStream s(7, 1), f(7, 2);
  HighDimSite site(X, y, Family::logistic, s, f, cfg);
  CHECK(std::isfinite(site.round1().beta_hat));
  CHECK(site.round1().beta_se > 0.0);
  CHECK(std::fabs(site.round1().beta_hat - 0.5) <= 4 * site.round1().beta_se);
}

TEST_CASE("pipeline fills every pair and is reproducible") {
  const Index n = 200, d = 30;
  auto build = [&] {
    RandomStream rng(8, 0);
    std::vector<HighDimSite> sites;
    for (int l = 0; l < 4; ++l) {
      Matrix X = ar1(n, d, 0.6, 0.5, rng);
      Vector theta = sparse_theta(d);
      if (l == 3) theta.segment(5, 6).array() += 0.5;
      Vector y = linear_response(X, theta, 0.0, rng);
      RandomStream s(9, static_cast<std::uint64_t>(l)), f(10, static_cast<std::uint64_t>(l));
      sites.emplace_back(X, y, Family::linear, s, f);
    }
    return highdim_pipeline(sites);
  };
  auto a = build(), b = build();
  REQUIRE(a.table.has_global());
  CHECK(a.table.global() == b.table.global());
  CHECK(a.table.se_global() == b.table.se_global());
  CHECK_NOTHROW(a.table.validate());
  // the shifted site is the furthest from site 0
  CHECK(a.table.global()[a.table.index(0, 3)] > a.table.global()[a.table.index(0, 1)]);
  CHECK(a.summaries.size() == 4);
}

TEST_CASE("debiased coordinates and distances are calibrated on the sparse design", "[calibration]") {
  // d = 200, n = 1000, both sites share theta.
  const Index n = 1000, d = 200;
  const int reps = 100;
  const double alpha = 0.05, z = stats::normal_quantile(alpha);
  const Vector theta = sparse_theta(d);
  HighDimConfig cfg;
  cfg.target = 10;  // theta_11 = 0.5
  int covered = 0, sites = 0, null_hits = 0, null_tests = 0, exceed = 0;
  std::vector<double> zraw;
  for (int r = 0; r < reps; ++r) {
    RandomStream rng(11, static_cast<std::uint64_t>(r));
    std::vector<HighDimSite> pair;
    for (int l = 0; l < 2; ++l) {
      Matrix X = ar1(n, d, 0.6, 0.5, rng);
      Vector y = linear_response(X, theta, 0.05 * l, rng);
      RandomStream s(12, stream_index(r, l)), f(13, stream_index(r, l));
      pair.emplace_back(X, y, Family::linear, s, f, cfg);
    }
    for (const auto& site : pair) {
      covered += std::fabs(site.round1().beta_hat - 0.5) <= 1.959963984540054 * site.round1().beta_se;
      ++sites;
    }
    for (Index j = 20; j < d; j += 20) {
      Vector e = Vector::Zero(d + 1);
      e(j + 1) = 1.0;
      auto b = pair[0].context().components(e);
      double est = pair[0].fit().theta_tilde(j) + b.delta;
      null_hits += std::fabs(est) / std::sqrt(b.V) > 1.959963984540054;
      ++null_tests;
    }
    const Vector& t0 = pair[0].fit().theta_tilde;
    const Vector& t1 = pair[1].fit().theta_tilde;
    auto lk = pair[0].components_against(t1), kl = pair[1].components_against(t0);
    auto dist = dissimilarity_highdim(t0, t1, lk, kl, n, n);
    exceed += dist.value / dist.se >= z;
    zraw.push_back(((t0 - t1).squaredNorm() + 2 * lk.delta + 2 * kl.delta) / dist.se);
  }
  double coverage = static_cast<double>(covered) / sites;
  double size = static_cast<double>(null_hits) / null_tests;
  double rate = static_cast<double>(exceed) / reps;
  INFO("coverage " << coverage << " null size " << size << " exceedance " << rate);
  CHECK(std::fabs(coverage - 0.95) <= 0.03);
  CHECK(std::fabs(size - 0.05) <= 0.02);
  CHECK(rate <= alpha + 0.03);

  // Kolmogorov distance of the corrected (untruncated) z-score to N(0,1)
  std::sort(zraw.begin(), zraw.end());
  double ks = 0.0;
  for (std::size_t i = 0; i < zraw.size(); ++i) {
    double F = stats::normal_cdf(zraw[i]);
    ks = std::max({ks, F - static_cast<double>(i) / reps, static_cast<double>(i + 1) / reps - F});
  }
  INFO("KS distance " << ks << ", median z " << zraw[zraw.size() / 2]);
  CHECK(ks <= 0.05);
}
