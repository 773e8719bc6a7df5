#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "rifl/distributions.hpp"
#include "rifl/random.hpp"
#include "rifl/types.hpp"

namespace rifl {

// One perturbed copy of every pairwise dissimilarity.
struct ResampleDraw {
  std::vector<double> global;  // empty on the univariate path
  std::vector<double> local;
};

// Draw m uses RandomStream(seed, stream_base + m); within a draw the pairs are
// visited in table order, global before local.
inline std::vector<ResampleDraw> resample_dissimilarities(const DissimilarityTable& t, int M, std::uint64_t seed,
                                                          std::uint64_t stream_base = 0) {
  if (M < 1) throw DomainError("resample_dissimilarities: M must be positive");
  t.validate();
  const std::size_t P = t.pairs();
  std::vector<ResampleDraw> draws(static_cast<std::size_t>(M));
  for (int m = 0; m < M; ++m) {
    RandomStream rng(seed, stream_base + static_cast<std::uint64_t>(m));
    auto& d = draws[static_cast<std::size_t>(m)];
    d.local.resize(P);
    if (t.has_global()) d.global.resize(P);
    for (std::size_t i = 0; i < P; ++i) {
      if (t.has_global()) d.global[i] = t.global()[i] + t.se_global()[i] * rng.normal();
      d.local[i] = t.local()[i] + t.se_local()[i] * rng.normal();
    }
  }
  return draws;
}

// err_n(M, nu) = c*(nu) (log n / M)^{1/(L(L-1))}.
inline double sampling_accuracy(int M, double nu, int L, double n) {
  if (L < 2 || !(nu > 0 && nu < 0.5) || !(n >= 2) || M < 1) throw DomainError("sampling_accuracy: invalid arguments");
  const double e = 1.0 / (static_cast<double>(L) * (L - 1));
  const double z = stats::normal_quantile(nu / (2.0 * L * (L - 1)));
  const double cstar = std::pow(2.0, e - 0.5) * std::sqrt(std::numbers::pi) * std::exp(0.5 * z * z);
  return cstar * std::pow(std::log(n) / M, e);
}

// max over pairs of the standardized distance between a draw and a reference
// table of true values (used by the sampling-accuracy property).
inline double max_standardized_gap(const ResampleDraw& d, const DissimilarityTable& observed,
                                   const std::vector<double>& true_global, const std::vector<double>& true_local) {
  double worst = 0.0;
  for (std::size_t i = 0; i < d.local.size(); ++i) {
    worst = std::max(worst, std::fabs(d.local[i] - true_local[i]) / observed.se_local()[i]);
    if (observed.has_global()) {
      worst = std::max(worst, std::fabs(d.global[i] - true_global[i]) / observed.se_global()[i]);
    }
  }
  return worst;
}

}  // namespace rifl
