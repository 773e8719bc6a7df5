#pragma once

#include <cmath>
#include <limits>
#include <numbers>

#include "rifl/error.hpp"

namespace rifl::stats {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// P(Z >= x)
inline double normal_sf(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

namespace detail {

// Acklam's rational approximation of the lower quantile, |rel err| < 1.2e-9.
inline double acklam_lower(double p) {
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double plow = 0.02425;
  if (p < plow) {
    double q = std::sqrt(-2 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  if (p <= 1 - plow) {
    double q = p - 0.5;
    double r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  }
  double q = std::sqrt(-2 * std::log1p(-p));
  return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
         ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
}

// Lower quantile for p <= 0.5, refined by Halley steps on the erfc-based CDF.
inline double lower_tail_quantile(double p) {
  double x = acklam_lower(p);
  for (int it = 0; it < 2; ++it) {
    double e = normal_cdf(x) - p;
    double u = e * std::sqrt(2 * std::numbers::pi) * std::exp(0.5 * x * x);
    x -= u / (1 + 0.5 * x * u);
  }
  return x;
}

}  // namespace detail

// Upper quantile: returns z with P(Z >= z) = p.
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("normal_quantile: p must lie in (0,1)");
  if (p == 0.5) return 0.0;
  if (p < 0.5) return -detail::lower_tail_quantile(p);
  return detail::lower_tail_quantile(1.0 - p);
}

// Regularized incomplete gamma functions P(a,x) and Q(a,x) = 1 - P(a,x).
namespace detail {

inline constexpr int kGammaMaxIter = 10000;

inline double gamma_series(double a, double x) {
  double sum = 1.0 / a, term = sum, ap = a;
  for (int n = 0; n < kGammaMaxIter; ++n) {
    ap += 1;
    term *= x / ap;
    sum += term;
    if (std::fabs(term) < std::fabs(sum) * 1e-17) {
      return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
    }
  }
  throw NumericError("incomplete gamma series did not converge");
}

// Modified Lentz continued fraction for Q(a,x), x >= a+1.
inline double gamma_cfrac(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1 - a, c = 1 / tiny, d = 1 / b, h = d;
  for (int i = 1; i < kGammaMaxIter; ++i) {
    double an = -i * (i - a);
    b += 2;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1) < 1e-16) {
      return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
    }
  }
  throw NumericError("incomplete gamma continued fraction did not converge");
}

}  // namespace detail

inline double gamma_p(double a, double x) {
  if (a <= 0) throw DomainError("gamma_p: a must be positive");
  if (x <= 0) return 0.0;
  if (x < a + 1) return detail::gamma_series(a, x);
  return 1.0 - detail::gamma_cfrac(a, x);
}

inline double gamma_q(double a, double x) {
  if (a <= 0) throw DomainError("gamma_q: a must be positive");
  if (x <= 0) return 1.0;
  if (x < a + 1) return 1.0 - detail::gamma_series(a, x);
  return detail::gamma_cfrac(a, x);
}

namespace detail {

// Poisson(lambda) mixture of central chi-square tails, summed outward from
// the mode until the untouched Poisson weight drops below 1e-12.
template <class Term>
double poisson_mixture(double lambda, Term&& term) {
  if (lambda == 0.0) return term(0);
  const long mode = static_cast<long>(std::floor(lambda));
  auto weight = [&](long j) {
    return std::exp(-lambda + j * std::log(lambda) - std::lgamma(j + 1.0));
  };
  double total = 0.0, mass = 0.0;
  for (long j = mode;; ++j) {
    double w = weight(j);
    total += w * term(j);
    mass += w;
    if (j > mode + 10 && w < 1e-16) break;
    if (j - mode > 100000) throw NumericError("noncentral chi-square series did not converge");
  }
  for (long j = mode - 1; j >= 0; --j) {
    double w = weight(j);
    total += w * term(j);
    mass += w;
    if (w < 1e-16 && 1.0 - mass < 1e-12) break;
  }
  if (1.0 - mass > 1e-9) throw NumericError("noncentral chi-square series lost mass");
  return total;
}

}  // namespace detail

inline double chisq_cdf(double x, double df, double ncp = 0.0) {
  if (df <= 0 || ncp < 0) throw DomainError("chisq_cdf: invalid df or noncentrality");
  if (x <= 0) return 0.0;
  return detail::poisson_mixture(0.5 * ncp, [&](long j) { return gamma_p(0.5 * df + j, 0.5 * x); });
}

inline double chisq_sf(double x, double df, double ncp = 0.0) {
  if (df <= 0 || ncp < 0) throw DomainError("chisq_sf: invalid df or noncentrality");
  if (x <= 0) return 1.0;
  return detail::poisson_mixture(0.5 * ncp, [&](long j) { return gamma_q(0.5 * df + j, 0.5 * x); });
}

// Upper quantile: returns c with P(chi2_df(ncp) >= c) = p.
inline double chisq_quantile(double p, double df, double ncp = 0.0) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("chisq_quantile: p must lie in (0,1)");
  if (df < 1 || ncp < 0) throw DomainError("chisq_quantile: need df >= 1 and ncp >= 0");
  double lo = 0.0, hi = std::max(1.0, df + ncp);
  int grow = 0;
  while (chisq_sf(hi, df, ncp) > p) {
    lo = hi;
    hi *= 2;
    if (++grow > 200) throw NumericError("chisq_quantile: could not bracket the root");
  }
  for (int it = 0; it < 300; ++it) {
    double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (chisq_sf(mid, df, ncp) > p) lo = mid; else hi = mid;
    if (hi - lo <= 1e-15 * hi) break;
  }
  return 0.5 * (lo + hi);
}

}  // namespace rifl::stats
