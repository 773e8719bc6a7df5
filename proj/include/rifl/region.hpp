#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <vector>

#include "rifl/aggregate.hpp"
#include "rifl/clique.hpp"
#include "rifl/resample.hpp"
#include "rifl/voting.hpp"

namespace rifl {

// Per-draw statistics together with the smallest threshold at which the
// draw's maximum clique satisfies the majority rule.  Thresholding is monotone,
// so draw m is retained at threshold c exactly when min_threshold[m] <= c.
struct ResampleAnalysis {
  int sites = 0;
  double majority_fraction = 0.5;
  std::vector<std::vector<double>> stats;
  std::vector<double> min_threshold;
  std::vector<int> largest_clique;  // at the draw's largest statistic (complete graph) this is L

  int resamples() const { return static_cast<int>(stats.size()); }
};

inline std::vector<double> draw_statistics(const ResampleDraw& d, const DissimilarityTable& t) {
  std::vector<double> s(t.pairs());
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = t.has_global() ? test_statistic(d.global[i], t.se_global()[i], d.local[i], t.se_local()[i])
                          : test_statistic(d.local[i], t.se_local()[i]);
  }
  return s;
}

// Smallest statistic value c such that the clique of 1{S <= c} meets the rule.
inline double min_majority_threshold(std::span<const double> s, int L, double fraction) {
  int need = L;
  for (int k = 1; k <= L; ++k) {
    if (meets_majority(k, L, fraction)) {
      need = k;
      break;
    }
  }
  if (need <= 1) return 0.0;
  std::vector<double> sorted(s.begin(), s.end());
  std::sort(sorted.begin(), sorted.end());
  auto ok = [&](double c) {
    detail::CliqueSearch search(build_voting_matrix(s, L, std::max(c, std::numeric_limits<double>::min())));
    return search.max_size(SiteSet::all(L).mask(), need) >= need;
  };
  std::size_t lo = 0, hi = sorted.size() - 1;  // the complete graph at sorted.back() qualifies
  while (lo < hi) {
    std::size_t mid = (lo + hi) / 2;
    if (ok(sorted[mid])) hi = mid; else lo = mid + 1;
  }
  return sorted[lo];
}

inline ResampleAnalysis analyze_resamples(const DissimilarityTable& t, const std::vector<ResampleDraw>& draws,
                                          double majority_fraction = 0.5) {
  ResampleAnalysis a;
  a.sites = t.sites();
  a.majority_fraction = majority_fraction;
  a.stats.reserve(draws.size());
  a.min_threshold.reserve(draws.size());
  for (const auto& d : draws) {
    a.stats.push_back(draw_statistics(d, t));
    a.min_threshold.push_back(min_majority_threshold(a.stats.back(), t.sites(), majority_fraction));
  }
  return a;
}

// Geometric grid from the c* = c_floor implied shrinkage up to 1.
inline std::vector<double> default_rho_grid(int L, double n, int M, double c_floor = 1.0 / 12.0, int points = 40) {
  double lo = c_floor * std::pow(std::log(std::max(n, 2.0)) / M, 1.0 / (static_cast<double>(L) * (L - 1)));
  if (lo >= 1.0 || points < 2) return {1.0};
  std::vector<double> g(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) g[i] = lo * std::pow(1.0 / lo, static_cast<double>(i) / (points - 1));
  g.back() = 1.0;
  return g;
}

struct RhoSelection {
  double rho = 1.0;
  bool rule_unmet = false;
  int retained = 0;
  std::vector<double> grid;
  std::vector<int> counts;  // retained draws at each grid value
};

inline int retained_at(const ResampleAnalysis& a, double cutoff) {
  int c = 0;
  for (double t : a.min_threshold) c += t <= cutoff;
  return c;
}

// Smallest grid value retaining at least prop * M draws, or 1 with the
// rule-unmet flag when no grid value does.
inline RhoSelection select_rho(const ResampleAnalysis& a, double T, std::vector<double> grid, double prop) {
  if (a.resamples() == 0) throw DomainError("select_rho: no draws");
  if (!(T > 0)) throw DomainError("select_rho: threshold must be positive");
  RhoSelection r;
  r.grid = std::move(grid);
  const int M = a.resamples();
  const int target = static_cast<int>(std::ceil(prop * M - 1e-9));
  std::vector<double> sorted = a.min_threshold;
  std::sort(sorted.begin(), sorted.end());
  bool found = false;
  for (double rho : r.grid) {
    int c = static_cast<int>(std::upper_bound(sorted.begin(), sorted.end(), rho * T) - sorted.begin());
    r.counts.push_back(c);
    if (!found && c >= target) {
      found = true;
      r.rho = rho;
      r.retained = c;
    }
  }
  if (!found) {
    r.rho = 1.0;
    r.rule_unmet = true;
    r.retained = static_cast<int>(std::upper_bound(sorted.begin(), sorted.end(), T) - sorted.begin());
  }
  return r;
}

namespace detail {

inline std::vector<Interval> merge_intervals(std::vector<Interval> v) {
  std::sort(v.begin(), v.end(), [](const Interval& a, const Interval& b) {
    return a.lo < b.lo || (a.lo == b.lo && a.hi < b.hi);
  });
  std::vector<Interval> out;
  for (const auto& iv : v) {
    if (!out.empty() && iv.lo <= out.back().hi) {
      out.back().hi = std::max(out.back().hi, iv.hi);
    } else {
      out.push_back(iv);
    }
  }
  return out;
}

}  // namespace detail

// Steps after resampling: choose rho, screen draws, aggregate the union.
inline ConfidenceRegion region_from_analysis(const std::vector<SiteSummary>& s, const DissimilarityTable& t,
                                             const ResampleAnalysis& a, const TuningConfig& cfg) {
  cfg.validate();
  const int L = t.sites();
  const int M = a.resamples();
  const double T = resampling_threshold(L, cfg.nu_value());
  ConfidenceRegion region;
  region.threshold = T;
  region.resamples = M;

  if (cfg.rho) {
    region.rho = *cfg.rho;
  } else {
    long nmin = s.front().n;
    for (const auto& x : s) nmin = std::min(nmin, x.n);
    auto grid = cfg.rho_grid.empty()
                    ? default_rho_grid(L, static_cast<double>(nmin), M, cfg.c_floor, cfg.grid_points)
                    : cfg.rho_grid;
    auto sel = select_rho(a, T, std::move(grid), cfg.prop);
    region.rho = sel.rho;
    region.rho_rule_unmet = sel.rule_unmet;
  }
  const double cutoff = region.rho * T;

  std::vector<int> hits(static_cast<std::size_t>(L), 0);
  std::map<std::uint64_t, int> distinct;
  for (int m = 0; m < M; ++m) {
    if (!(a.min_threshold[m] <= cutoff)) continue;
    ++region.retained_count;
    auto h = build_voting_matrix(a.stats[m], L, cutoff);
    SiteSet v = majority_vote_set(h);
    for (int l : v.to_vector()) ++hits[l];
    ++distinct[v.mask()];
  }
  if (region.retained_count == 0) {
    MajorityDiagnostics diag;
    diag.rho = region.rho;
    diag.threshold = cutoff;
    diag.resamples = M;
    diag.clique_histogram.assign(static_cast<std::size_t>(L) + 1, 0);
    for (int m = 0; m < M; ++m) {
      int c = clique_number(build_voting_matrix(a.stats[m], L, cutoff));
      ++diag.clique_histogram[c];
      diag.largest_clique = std::max(diag.largest_clique, c);
    }
    throw MajorityRuleError("no resampled maximum clique satisfies the majority rule; the majority rule may fail",
                            std::move(diag));
  }

  region.generalizability.resize(static_cast<std::size_t>(L));
  for (int l = 0; l < L; ++l) region.generalizability[l] = static_cast<double>(hits[l]) / region.retained_count;

  const double a1 = cfg.alpha1();
  std::vector<Interval> pieces;
  for (auto [mask, count] : distinct) {
    SiteSet v(mask);
    region.retained_sets.push_back(v);
    if (s.front().dim() == 1) {
      pieces.push_back(naive_ci(s, v, a1));
    } else {
      region.ellipsoids.push_back(confidence_ellipsoid(s, v, a1));
    }
  }
  if (!pieces.empty()) {
    region.intervals = detail::merge_intervals(std::move(pieces));
    region.midpoint = 0.5 * (region.intervals.front().lo + region.intervals.back().hi);
  } else {
    // multivariate: the precision-weighted center of the first retained set
    region.midpoint = region.ellipsoids.front().center(0);
  }
  return region;
}

inline ConfidenceRegion rifl_confidence_region(const std::vector<SiteSummary>& s, const DissimilarityTable& t,
                                               const TuningConfig& cfg, std::uint64_t seed,
                                               std::uint64_t stream_base = 0) {
  cfg.validate();
  check_summaries(s);
  if (t.sites() < 3) throw DomainError("RIFL needs at least three sites");
  if (static_cast<int>(s.size()) != t.sites()) throw DomainError("summaries and table disagree in site count");
  auto draws = resample_dissimilarities(t, cfg.resamples, seed, stream_base);
  auto a = analyze_resamples(t, draws, cfg.majority_fraction);
  return region_from_analysis(s, t, a, cfg);
}

}  // namespace rifl
