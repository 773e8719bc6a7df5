#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "rifl/clique.hpp"
#include "rifl/distributions.hpp"
#include "rifl/types.hpp"

namespace rifl {

inline double test_statistic(double d, double se_d, double l, double se_l) {
  return std::max(std::fabs(d / se_d), std::fabs(l / se_l));
}

inline double test_statistic(double l, double se_l) { return std::fabs(l / se_l); }

// Per-pair statistics of an observed table.
inline std::vector<double> pair_statistics(const DissimilarityTable& t) {
  std::vector<double> s(t.pairs());
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = t.has_global() ? test_statistic(t.global()[i], t.se_global()[i], t.local()[i], t.se_local()[i])
                          : test_statistic(t.local()[i], t.se_local()[i]);
  }
  return s;
}

// Bonferroni screening threshold for the observed voting matrix at level
// `level` (0.05 by default): z_{level/[2L(L-1)]} with both dissimilarities,
// z_{level/[L(L-1)]} when only the local one is tested.
inline double screening_threshold(int L, bool has_global, double level = 0.05) {
  double tests = static_cast<double>(L) * (L - 1) * (has_global ? 2.0 : 1.0);
  return stats::normal_quantile(level / tests);
}

// Threshold T = z_{nu/[2L(L-1)]} that the resampled statistics are compared
// against after shrinkage.
inline double resampling_threshold(int L, double nu) {
  return stats::normal_quantile(nu / (2.0 * L * (L - 1)));
}

inline VotingMatrix build_voting_matrix(std::span<const double> s, int L, double threshold) {
  if (!(threshold > 0)) throw DomainError("voting threshold must be positive");
  if (s.size() != static_cast<std::size_t>(L) * (L - 1) / 2) throw DomainError("statistic table has wrong size");
  VotingMatrix h(L);
  std::size_t i = 0;
  for (int l = 0; l < L; ++l) {
    for (int k = l + 1; k < L; ++k, ++i) {
      if (s[i] <= threshold) h.connect(l, k);
    }
  }
  return h;
}

inline VotingMatrix build_voting_matrix(const DissimilarityTable& t, double threshold) {
  auto s = pair_statistics(t);
  return build_voting_matrix(s, t.sites(), threshold);
}

// Sites whose row of H (diagonal included) has more than fraction * L ones.
inline SiteSet majority_vote_set(const VotingMatrix& h, double fraction = 0.5) {
  SiteSet out;
  const int L = h.sites();
  for (int l = 0; l < L; ++l) {
    if (static_cast<double>(h.votes(l)) > fraction * L) out.insert(l);
  }
  return out;
}

}  // namespace rifl
