#pragma once

#include <cmath>
#include <vector>

#include "rifl/distributions.hpp"
#include "rifl/types.hpp"

namespace rifl {

inline void check_summaries(const std::vector<SiteSummary>& s) {
  if (s.size() < 2) throw DomainError("need at least two site summaries");
  for (const auto& x : s) {
    if (x.dim() != s.front().dim()) throw DomainError("site summaries disagree in dimension");
  }
}

// Local dissimilarities only (no global component).  Univariate: signed
// difference of the estimates; multivariate: squared distance with the
// delta-method standard error plus the 1/min(n) inflation.
inline DissimilarityTable local_dissimilarity(const std::vector<SiteSummary>& s, bool with_global = false) {
  check_summaries(s);
  const int L = static_cast<int>(s.size());
  DissimilarityTable t(L, with_global);
  for (int l = 0; l < L; ++l) {
    for (int k = l + 1; k < L; ++k) {
      if (s[l].dim() == 1) {
        double se = std::sqrt(s[l].omega(0, 0) + s[k].omega(0, 0));
        t.set_local(l, k, s[l].point() - s[k].point(), se);
      } else {
        Vector diff = s[l].beta - s[k].beta;
        double v = 4.0 * diff.dot((s[l].omega + s[k].omega) * diff) +
                   1.0 / static_cast<double>(std::min(s[l].n, s[k].n));
        t.set_local(l, k, diff.squaredNorm(), std::sqrt(v));
      }
    }
  }
  return t;
}

// What the coordinator needs: per-site summaries and the pair table.
struct RiflInputs {
  std::vector<SiteSummary> summaries;
  DissimilarityTable table;
};

struct DistanceEstimate {
  double value = 0.0;
  double se = 0.0;
};

struct IvwResult {
  Vector center;
  Matrix precision;
  double point() const { return center(0); }
  double se() const { return 1.0 / std::sqrt(precision(0, 0)); }
};

// Inverse-variance weighted aggregate over `set`; sites are visited in
// increasing order so equal sets give bit-identical results.
inline IvwResult ivw_aggregate(const std::vector<SiteSummary>& s, SiteSet set) {
  if (set.empty()) throw DomainError("ivw_aggregate: empty site set");
  const Index q = s.front().dim();
  IvwResult r;
  if (q == 1) {
    double wsum = 0.0, acc = 0.0;
    for (int l : set.to_vector()) {
      double w = 1.0 / s[l].omega(0, 0);
      wsum += w;
      acc += w * s[l].point();
    }
    r.center = Vector::Constant(1, acc / wsum);
    r.precision = Matrix::Constant(1, 1, wsum);
    return r;
  }
  Matrix prec = Matrix::Zero(q, q);
  Vector acc = Vector::Zero(q);
  for (int l : set.to_vector()) {
    Matrix p = spd_inverse(s[l].omega);
    prec += p;
    acc += p * s[l].beta;
  }
  r.precision = prec;
  r.center = prec.llt().solve(acc);
  return r;
}

inline Interval naive_ci(const std::vector<SiteSummary>& s, SiteSet set, double alpha) {
  if (!(alpha > 0 && alpha < 1)) throw DomainError("naive_ci: alpha must lie in (0,1)");
  auto r = ivw_aggregate(s, set);
  double h = stats::normal_quantile(alpha / 2) * r.se();
  return {r.point() - h, r.point() + h};
}

inline Ellipsoid confidence_ellipsoid(const std::vector<SiteSummary>& s, SiteSet set, double alpha) {
  auto r = ivw_aggregate(s, set);
  return {r.center, r.precision, stats::chisq_quantile(alpha, static_cast<double>(r.center.size()))};
}

// Naive interval over the (simulation-known) prevailing set.
inline Interval oracle_ci(const std::vector<SiteSummary>& s, SiteSet true_set, double alpha) {
  return naive_ci(s, true_set, alpha);
}

}  // namespace rifl
