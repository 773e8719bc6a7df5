#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <tuple>
#include <vector>

#include "rifl/aggregate.hpp"
#include "rifl/lasso.hpp"
#include "rifl/projection.hpp"

namespace rifl {

struct HighDimConfig {
  double kappa = 1.1;   // lambda = kappa sqrt(log d / |S2|)
  double tau = 0.0;     // row bound; 0 means sqrt(2 log |S2|)
  Index target = 0;     // covariate whose coefficient is the reported beta
  LassoOptions lasso;
  ProjectionOptions projection;
};

struct HighDimFit {
  double mu_tilde = 0.0;
  Vector theta_tilde;
  double lambda = 0.0;
};

struct BiasComponents {
  Vector u;  // length d + 1, intercept first
  double delta = 0.0;
  double V = 0.0;
  double lambda = 0.0;  // projection lambda after any relaxation
};

// What a site broadcasts after the first round.
struct HighDimRound1 {
  long n = 0;
  HighDimFit fit;
  double beta_hat = 0.0;
  double beta_se = 0.0;
};

// Random split with |S1| = ceil(n/2); both halves sorted.
inline std::pair<std::vector<Index>, std::vector<Index>> split_half(Index n, RandomStream& rng) {
  std::vector<Index> perm(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) perm[i] = i;
  rng.shuffle(perm);
  const std::size_t n1 = static_cast<std::size_t>((n + 1) / 2);
  std::vector<Index> s1(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n1));
  std::vector<Index> s2(perm.begin() + static_cast<std::ptrdiff_t>(n1), perm.end());
  std::sort(s1.begin(), s1.end());
  std::sort(s2.begin(), s2.end());
  return {std::move(s1), std::move(s2)};
}

// Second-half quantities of one site.  Only S2 rows and the S1 fit enter.
class BiasContext {
 public:
  BiasContext(const Matrix& X2, const Vector& y2, stats::Family family, const HighDimFit& fit,
              const HighDimConfig& cfg)
      : family_(family), solver_(ProjectionSolver::from_rows(with_intercept(X2))), cfg_(cfg) {
    const Index n2 = X2.rows(), d = X2.cols();
    if (n2 < 2) throw DomainError("bias components: second half is too small");
    Vector eta = (X2 * fit.theta_tilde).array() + fit.mu_tilde;
    weight_.resize(n2);
    resid_.resize(n2);
    for (Index i = 0; i < n2; ++i) {
      if (family == stats::Family::linear) {
        weight_(i) = 1.0;
        resid_(i) = y2(i) - eta(i);
      } else {
        double p = std::clamp(expit(eta(i)), 1e-4, 1.0 - 1e-4);
        weight_(i) = 1.0 / (p * (1.0 - p));
        resid_(i) = y2(i) - p;
      }
    }
    // residual scale enters V for the linear family (W = 1 carries no variance)
    scale_ = family == stats::Family::linear ? resid_.squaredNorm() / static_cast<double>(n2) : 1.0;
    score_ = solver_.rows().transpose() * (weight_.array() * resid_.array()).matrix() / static_cast<double>(n2);
    lambda_ = cfg.kappa * std::sqrt(std::log(static_cast<double>(std::max<Index>(d, 2))) / static_cast<double>(n2));
    tau_ = cfg.tau > 0 ? cfg.tau : std::sqrt(2.0 * std::log(static_cast<double>(n2)));
  }

  Index n2() const { return solver_.rows().rows(); }
  double lambda() const { return lambda_; }
  double tau() const { return tau_; }

  // gamma in (d+1) coordinates, intercept first.
  BiasComponents components(const Vector& gamma) const {
    BiasComponents b;
    if (gamma.isZero(0.0)) {
      b.u = Vector::Zero(gamma.size());
      b.lambda = lambda_;
      return b;
    }
    auto r = solver_.solve(gamma, lambda_, tau_, cfg_.projection);
    b.u = std::move(r.u);
    b.lambda = r.lambda;
    b.delta = b.u.dot(score_);
    Vector proj = solver_.rows() * b.u;
    const double n2 = static_cast<double>(this->n2());
    b.V = scale_ * (weight_.array() * proj.array().square()).sum() / (n2 * n2);
    return b;
  }

  stats::Family family() const { return family_; }

 private:
  stats::Family family_;
  ProjectionSolver solver_;
  HighDimConfig cfg_;
  Vector weight_, resid_, score_;
  double scale_ = 1.0, lambda_ = 0.0, tau_ = 0.0;
};

// One site's share of the two-round protocol.
class HighDimSite {
 public:
  HighDimSite(const Matrix& X, const Vector& y, stats::Family family, RandomStream& split_rng,
              RandomStream& fold_rng, const HighDimConfig& cfg = {})
      : cfg_(cfg) {
    if (X.rows() != y.size()) throw DomainError("highdim site: X and y disagree in length");
    if (cfg.target < 0 || cfg.target >= X.cols()) throw DomainError("highdim site: target coordinate out of range");
    std::tie(s1_, s2_) = split_half(X.rows(), split_rng);
    Matrix X1 = take_rows(X, s1_);
    Vector y1 = take(y, s1_);
    auto cv = lasso_cv(X1, y1, family, fold_rng, cfg.lasso);
    fit_.mu_tilde = cv.fit.intercept;
    fit_.theta_tilde = cv.fit.coef;
    fit_.lambda = cv.fit.lambda;
    context_.emplace(take_rows(X, s2_), take(y, s2_), family, fit_, cfg);

    // debiased target coordinate: the projection machinery with gamma = e_{j+1}
    Vector e = Vector::Zero(X.cols() + 1);
    e(cfg.target + 1) = 1.0;
    auto b = context_->components(e);
    round1_.n = static_cast<long>(X.rows());
    round1_.fit = fit_;
    round1_.beta_hat = fit_.theta_tilde(cfg.target) + b.delta;
    round1_.beta_se = std::sqrt(b.V);
    if (!(round1_.beta_se > 0)) throw NumericError("highdim site: zero debiased standard error");
  }

  const HighDimRound1& round1() const { return round1_; }
  const HighDimFit& fit() const { return fit_; }
  const std::vector<Index>& first_half() const { return s1_; }
  const std::vector<Index>& second_half() const { return s2_; }
  const BiasContext& context() const { return *context_; }

  // Components for the direction (0, own - peer).
  BiasComponents components_against(const Vector& peer_theta) const {
    Vector gamma(peer_theta.size() + 1);
    gamma(0) = 0.0;
    gamma.tail(peer_theta.size()) = fit_.theta_tilde - peer_theta;
    return context_->components(gamma);
  }

 private:
  HighDimConfig cfg_;
  std::vector<Index> s1_, s2_;
  HighDimFit fit_;
  std::optional<BiasContext> context_;
  HighDimRound1 round1_;
};

// Bias-corrected squared distance.  Each site's components are computed for
// its own "own - peer" direction, so both corrections enter with a plus sign.
inline DistanceEstimate dissimilarity_highdim(const Vector& theta_l, const Vector& theta_k, const BiasComponents& lk,
                                              const BiasComponents& kl, long n_l, long n_k) {
  if (theta_l.size() != theta_k.size()) throw DomainError("dissimilarity_highdim: dimension mismatch");
  double raw = (theta_l - theta_k).squaredNorm() + 2.0 * lk.delta + 2.0 * kl.delta;
  double v = 4.0 * lk.V + 4.0 * kl.V + 1.0 / static_cast<double>(std::min(n_l, n_k));
  return {std::max(raw, 0.0), std::sqrt(v)};
}

// Coordinator side.  components[l][k] comes from site l against peer k.
inline RiflInputs highdim_table(const std::vector<HighDimRound1>& r1,
                                const std::vector<std::vector<BiasComponents>>& components) {
  const int L = static_cast<int>(r1.size());
  if (static_cast<int>(components.size()) != L) throw DomainError("highdim_table: components per site missing");
  RiflInputs in;
  for (int l = 0; l < L; ++l) in.summaries.push_back(SiteSummary::univariate(l, r1[l].beta_hat, r1[l].beta_se, r1[l].n));
  in.table = local_dissimilarity(in.summaries, true);
  for (int l = 0; l < L; ++l)
    for (int k = l + 1; k < L; ++k) {
      auto d = dissimilarity_highdim(r1[l].fit.theta_tilde, r1[k].fit.theta_tilde, components[l][k], components[k][l],
                                     r1[l].n, r1[k].n);
      in.table.set_global(l, k, d.value, d.se);
    }
  return in;
}

// In-process version of both rounds.
inline RiflInputs highdim_pipeline(const std::vector<HighDimSite>& sites) {
  const int L = static_cast<int>(sites.size());
  std::vector<HighDimRound1> r1;
  for (const auto& s : sites) r1.push_back(s.round1());
  std::vector<std::vector<BiasComponents>> comp(static_cast<std::size_t>(L), std::vector<BiasComponents>(L));
  for (int l = 0; l < L; ++l)
    for (int k = 0; k < L; ++k)
      if (k != l) comp[l][k] = sites[l].components_against(r1[k].fit.theta_tilde);
  return highdim_table(r1, comp);
}

}  // namespace rifl
