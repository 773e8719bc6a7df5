#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "rifl/aggregate.hpp"
#include "rifl/random.hpp"
#include "rifl/voting.hpp"

namespace rifl {

struct BaselineResult {
  std::string method;
  Interval interval;
  double point = 0.0;
};

inline double median_of(std::vector<double> v) {
  if (v.empty()) throw DomainError("median of an empty set");
  const std::size_t h = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(h), v.end());
  double upper = v[h];
  if (v.size() % 2) return upper;
  double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(h));
  return 0.5 * (lower + upper);
}

// Median of the site estimates with a parametric-bootstrap SE.
inline BaselineResult median_ci(const std::vector<SiteSummary>& s, double alpha, int B, RandomStream& rng) {
  check_summaries(s);
  if (s.size() < 3) throw DomainError("median_ci: need at least 3 sites");
  if (B < 100) throw DomainError("median_ci: need at least 100 bootstrap draws");
  if (s.front().dim() != 1) throw DomainError("median_ci: univariate summaries only");
  std::vector<double> beta(s.size()), draw(s.size());
  for (std::size_t l = 0; l < s.size(); ++l) beta[l] = s[l].point();
  double sum = 0.0, sq = 0.0;
  for (int b = 0; b < B; ++b) {
    for (std::size_t l = 0; l < s.size(); ++l) draw[l] = beta[l] + s[l].sigma() * rng.normal();
    double m = median_of(draw);
    sum += m;
    sq += m * m;
  }
  double mean = sum / B;
  double se = std::sqrt(std::max(0.0, (sq - B * mean * mean) / (B - 1)));
  double point = median_of(beta);
  double h = stats::normal_quantile(alpha / 2) * se;
  return {"median", {point - h, point + h}, point};
}

// Voting with maximum clique: screen pairs at z_{0.05/[2L(L-1)]} (or the
// local-only analogue) and pool the largest clique.
inline SiteSet vmc_set(const DissimilarityTable& t) {
  auto h = build_voting_matrix(t, screening_threshold(t.sites(), t.has_global()));
  return maximum_clique(h);
}

inline BaselineResult vmc_ci(const std::vector<SiteSummary>& s, const DissimilarityTable& t, double alpha) {
  SiteSet v = vmc_set(t);
  Interval ci = naive_ci(s, v, alpha);
  return {"vmc", ci, ivw_aggregate(s, v).point()};
}

// 1/sqrt(sum of precisions) over the VMC set; the per-replication SE that
// the bias-aware interval rescales.
inline double vmc_se(const std::vector<SiteSummary>& s, const DissimilarityTable& t) {
  return ivw_aggregate(s, vmc_set(t)).se();
}

inline long mnb_subsample_size(long n, double upsilon) {
  if (n < 1 || !(upsilon > 0 && upsilon <= 1)) throw DomainError("mnb: invalid n or upsilon");
  return std::max(1L, static_cast<long>(std::floor(std::pow(static_cast<double>(n), upsilon) + 1e-9)));
}

// Row indices of a size-m resample with replacement.
inline std::vector<Index> resample_rows(long n, long m, RandomStream& rng) {
  std::vector<Index> rows(static_cast<std::size_t>(m));
  for (auto& r : rows) r = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
  return rows;
}

// Smallest t with L_n(t) >= p for the empirical CDF of sorted values.
inline double smallest_quantile(const std::vector<double>& sorted, double p) {
  const double B = static_cast<double>(sorted.size());
  auto k = static_cast<std::size_t>(std::ceil(p * B - 1e-12));
  k = std::clamp<std::size_t>(k, 1, sorted.size());
  return sorted[k - 1];
}

// m-out-of-n bootstrap interval around beta_star.  replicate(j) returns the
// point estimate recomputed on the j-th set of size-m resamples.
template <class Replicate>
BaselineResult mnb_ci(double beta_star, long n, long m, int B, Replicate&& replicate, double alpha) {
  if (B < 1) throw DomainError("mnb: need at least one replicate");
  std::vector<double> t(static_cast<std::size_t>(B));
  const double rm = std::sqrt(static_cast<double>(m)), rn = std::sqrt(static_cast<double>(n));
  for (int j = 0; j < B; ++j) {
    double b = replicate(j);
    if (!std::isfinite(b)) throw NumericError("mnb: replicate estimate is not finite");
    t[j] = rm * (b - beta_star);
  }
  std::sort(t.begin(), t.end());
  double lo_t = smallest_quantile(t, alpha / 2), hi_t = smallest_quantile(t, 1 - alpha / 2);
  return {"mnb", {beta_star - hi_t / rn, beta_star - lo_t / rn}, beta_star};
}

// Oracle bias-aware interval: point +- se sqrt(cv_alpha(bias^2/se^2)), cv the
// upper alpha quantile of a noncentral chi-square with one degree of freedom.
inline BaselineResult oba_ci(double point, double se, double oracle_bias, double alpha) {
  if (!(se > 0)) throw DomainError("oba: standard error must be positive");
  double b = oracle_bias / se;
  double chi = se * std::sqrt(stats::chisq_quantile(alpha, 1.0, b * b));
  return {"oba", {point - chi, point + chi}, point};
}

// Cross-replication calibration for the bias-aware interval: the empirical
// SD of the VMC estimates over the mean of their nominal SEs, and the oracle
// bias |mean - truth|.
struct ObaCalibration {
  double ratio = 1.0;
  double bias = 0.0;
};

inline ObaCalibration oba_calibrate(const std::vector<double>& points, const std::vector<double>& ses, double truth) {
  if (points.size() != ses.size() || points.size() < 2) throw DomainError("oba_calibrate: need matching samples");
  const double R = static_cast<double>(points.size());
  double mean = 0.0, mse = 0.0;
  for (std::size_t j = 0; j < points.size(); ++j) {
    mean += points[j] / R;
    mse += ses[j] / R;
  }
  double ss = 0.0;
  for (double p : points) ss += (p - mean) * (p - mean);
  return {std::sqrt(ss / (R - 1)) / mse, std::fabs(mean - truth)};
}

}  // namespace rifl
