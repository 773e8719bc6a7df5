#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rifl/linalg.hpp"

namespace rifl {

// Subset of sites {0..L-1} as a bitmask (L <= 64).  Site ids in files and
// reports are 1-based; everything in memory is 0-based.
class SiteSet {
 public:
  constexpr SiteSet() = default;
  constexpr explicit SiteSet(std::uint64_t mask) : mask_(mask) {}
  static SiteSet all(int L) { return SiteSet(L >= 64 ? ~0ull : ((1ull << L) - 1)); }
  static SiteSet of(std::initializer_list<int> ids) {
    SiteSet s;
    for (int i : ids) s.insert(i);
    return s;
  }

  std::uint64_t mask() const { return mask_; }
  int size() const { return std::popcount(mask_); }
  bool empty() const { return mask_ == 0; }
  bool contains(int i) const { return (mask_ >> i) & 1u; }
  void insert(int i) { mask_ |= 1ull << i; }
  bool subset_of(SiteSet o) const { return (mask_ & ~o.mask_) == 0; }

  std::vector<int> to_vector() const {
    std::vector<int> out;
    for (std::uint64_t m = mask_; m; m &= m - 1) out.push_back(std::countr_zero(m));
    return out;
  }

  friend bool operator==(SiteSet a, SiteSet b) { return a.mask_ == b.mask_; }
  friend bool operator<(SiteSet a, SiteSet b) { return a.mask_ < b.mask_; }

 private:
  std::uint64_t mask_ = 0;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double length() const { return hi - lo; }
  bool contains(double x) const { return lo <= x && x <= hi; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

struct SiteSummary {
  int site_id = 0;  // 0-based position among the L sites
  Vector beta;      // length q
  Matrix omega;     // q x q covariance of beta (sigma^2 when q = 1)
  long n = 0;

  static SiteSummary univariate(int id, double beta, double sigma, long n) {
    if (!(sigma > 0) || !std::isfinite(sigma)) throw DomainError("site standard error must be positive");
    if (n < 1) throw DomainError("site sample size must be positive");
    SiteSummary s;
    s.site_id = id;
    s.beta = Vector::Constant(1, beta);
    s.omega = Matrix::Constant(1, 1, sigma * sigma);
    s.n = n;
    return s;
  }

  static SiteSummary multivariate(int id, Vector beta, Matrix omega, long n) {
    if (beta.size() != omega.rows() || !is_spd(omega)) throw DomainError("site covariance must be symmetric positive definite");
    if (n < 1) throw DomainError("site sample size must be positive");
    SiteSummary s;
    s.site_id = id;
    s.beta = std::move(beta);
    s.omega = std::move(omega);
    s.n = n;
    return s;
  }

  Index dim() const { return beta.size(); }
  double point() const { return beta(0); }
  double sigma() const { return std::sqrt(omega(0, 0)); }
};

// Upper-triangular per-pair tables.  Pairs are enumerated (0,1),(0,2),...,
// (L-2,L-1).  The global part is absent on the univariate path.
class DissimilarityTable {
 public:
  DissimilarityTable() = default;
  DissimilarityTable(int L, bool has_global) : L_(L), has_global_(has_global) {
    if (L < 2 || L > 64) throw DomainError("DissimilarityTable: need 2 <= L <= 64");
    std::size_t P = pairs();
    local_.assign(P, 0.0);
    se_local_.assign(P, 0.0);
    if (has_global) {
      global_.assign(P, 0.0);
      se_global_.assign(P, 0.0);
    }
  }

  int sites() const { return L_; }
  bool has_global() const { return has_global_; }
  std::size_t pairs() const { return static_cast<std::size_t>(L_) * (L_ - 1) / 2; }

  std::size_t index(int l, int k) const {
    if (l > k) std::swap(l, k);
    if (l == k || l < 0 || k >= L_) throw DomainError("DissimilarityTable: invalid pair");
    return static_cast<std::size_t>(l) * L_ - static_cast<std::size_t>(l) * (l + 1) / 2 + (k - l - 1);
  }

  void set_local(int l, int k, double value, double se) {
    check_se(se);
    if (!std::isfinite(value)) throw DomainError("local dissimilarity must be finite");
    auto i = index(l, k);
    local_[i] = l < k ? value : -value;
    se_local_[i] = se;
  }

  void set_global(int l, int k, double value, double se) {
    if (!has_global_) throw DomainError("table has no global component");
    check_se(se);
    if (!(value >= 0) || !std::isfinite(value)) throw DomainError("global dissimilarity must be finite and nonnegative");
    auto i = index(l, k);
    global_[i] = value;
    se_global_[i] = se;
  }

  const std::vector<double>& local() const { return local_; }
  const std::vector<double>& se_local() const { return se_local_; }
  const std::vector<double>& global() const { return global_; }
  const std::vector<double>& se_global() const { return se_global_; }

  // Throws unless every standard error has been set to a positive value.
  void validate() const {
    for (double s : se_local_) check_se(s);
    for (double s : se_global_) check_se(s);
  }

 private:
  static void check_se(double se) {
    if (!(se > 0) || !std::isfinite(se)) throw DomainError("dissimilarity standard errors must be positive");
  }

  int L_ = 0;
  bool has_global_ = false;
  std::vector<double> local_, se_local_, global_, se_global_;
};

// Symmetric 0/1 matrix with unit diagonal stored as row bitmasks.
class VotingMatrix {
 public:
  explicit VotingMatrix(int L) : L_(L), rows_(static_cast<std::size_t>(L)) {
    if (L < 1 || L > 64) throw DomainError("VotingMatrix: need 1 <= L <= 64");
    for (int l = 0; l < L; ++l) rows_[l] = 1ull << l;
  }

  static VotingMatrix from_edges(int L, const std::vector<std::pair<int, int>>& edges) {
    VotingMatrix h(L);
    for (auto [a, b] : edges) h.connect(a, b);
    return h;
  }

  int sites() const { return L_; }
  void connect(int l, int k) {
    rows_[l] |= 1ull << k;
    rows_[k] |= 1ull << l;
  }
  bool similar(int l, int k) const { return (rows_[l] >> k) & 1u; }
  std::uint64_t row(int l) const { return rows_[l]; }
  int votes(int l) const { return std::popcount(rows_[l]); }

 private:
  int L_;
  std::vector<std::uint64_t> rows_;
};

struct TuningConfig {
  int resamples = 500;                // M
  double alpha = 0.05;
  std::optional<double> nu;           // defaults to alpha / 20
  double prop = 0.10;
  double majority_fraction = 0.5;
  std::vector<double> rho_grid;       // empty: geometric grid from the c* = 1/12 floor
  std::optional<double> rho;          // fixed shrinkage, bypasses the search
  double c_floor = 1.0 / 12.0;
  int grid_points = 40;

  double nu_value() const { return nu ? *nu : alpha / 20.0; }
  double alpha1() const { return alpha - nu_value(); }

  void validate() const {
    double v = nu_value();
    if (!(v > 0 && v < alpha && alpha < 1)) throw DomainError("tuning: need 0 < nu < alpha < 1");
    if (!(prop > 0 && prop < 1)) throw DomainError("tuning: need 0 < prop < 1");
    if (resamples < 1 || resamples >= (1 << 20)) throw DomainError("tuning: resamples must be in [1, 2^20)");
    if (!(majority_fraction >= 0.5 && majority_fraction < 1)) throw DomainError("tuning: majority fraction must be in [0.5, 1)");
    if (rho && !(*rho > 0 && *rho <= 1)) throw DomainError("tuning: rho must be in (0, 1]");
    for (std::size_t i = 0; i < rho_grid.size(); ++i) {
      if (!(rho_grid[i] > 0 && rho_grid[i] <= 1) || (i && rho_grid[i] <= rho_grid[i - 1])) {
        throw DomainError("tuning: rho grid must be increasing within (0, 1]");
      }
    }
  }
};

// Majority rule on a set size.  The default fraction 1/2 is the strict
// |V| > L/2; larger fractions additionally require |V| >= fraction * L.
inline bool meets_majority(int size, int L, double fraction = 0.5) {
  if (2 * size <= L) return false;
  return static_cast<double>(size) >= fraction * L - 1e-9;
}

struct Ellipsoid {
  Vector center;
  Matrix precision;
  double radius = 0.0;  // chi-square critical value
  bool contains(const Vector& x) const {
    Vector d = x - center;
    return d.dot(precision * d) <= radius;
  }
};

struct ConfidenceRegion {
  std::vector<Interval> intervals;     // univariate: merged, sorted, disjoint
  std::vector<Ellipsoid> ellipsoids;   // multivariate: one per distinct retained set
  std::vector<SiteSet> retained_sets;  // distinct enlarged sets behind the pieces
  int retained_count = 0;
  int resamples = 0;
  std::vector<double> generalizability;
  double midpoint = 0.0;
  double rho = 0.0;
  bool rho_rule_unmet = false;
  double threshold = 0.0;  // T before shrinkage

  bool multivariate() const { return !ellipsoids.empty(); }

  bool contains(double x) const {
    for (const auto& iv : intervals) if (iv.contains(x)) return true;
    return false;
  }
  bool contains(const Vector& x) const {
    if (!multivariate()) return contains(x(0));
    for (const auto& e : ellipsoids) if (e.contains(x)) return true;
    return false;
  }
  // Total measure of the union (univariate).
  double length() const {
    double s = 0.0;
    for (const auto& iv : intervals) s += iv.length();
    return s;
  }
};

}  // namespace rifl
