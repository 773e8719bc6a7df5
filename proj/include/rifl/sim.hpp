#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rifl/baselines.hpp"
#include "rifl/causal.hpp"
#include "rifl/highdim.hpp"
#include "rifl/lowdim.hpp"
#include "rifl/parallel.hpp"
#include "rifl/region.hpp"
#include "rifl/resample.hpp"

namespace rifl {

enum class DgpKind { lowdim, highdim, ate };

inline const char* kind_name(DgpKind k) {
  switch (k) {
    case DgpKind::lowdim: return "lowdim";
    case DgpKind::highdim: return "highdim";
    case DgpKind::ate: return "ate";
  }
  return "?";
}

inline DgpKind parse_kind(const std::string& s) {
  if (s == "lowdim") return DgpKind::lowdim;
  if (s == "highdim") return DgpKind::highdim;
  if (s == "ate") return DgpKind::ate;
  throw DomainError("unknown scenario kind: " + s);
}

inline const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> m{"rifl", "rifl80", "vmc", "mv", "median", "mnb", "oba", "oracle"};
  return m;
}

struct Scenario {
  DgpKind kind = DgpKind::lowdim;
  int L = 10;
  int majority = 6;
  long n = 1000;
  int dim = 0;          // 0: 10 covariates (lowdim, ate) or 200 (highdim)
  double a = 1.0;       // separation
  int reps = 500;
  std::uint64_t seed = 1;
  long target_size = 10000;   // ate target sample N
  Index highdim_target = 10;  // theta_11
  TuningConfig tuning;
  int median_draws = 500;
  int mnb_draws = 500;
  double mnb_upsilon = 0.8;
  bool sampling_check = false;  // record the resampling-accuracy event per rep
  HighDimConfig highdim;

  int dimension() const {
    if (dim > 0) return dim;
    return kind == DgpKind::highdim ? 200 : 10;
  }

  void validate() const {
    if (L < 3 || L > 64) throw DomainError("scenario: need 3 <= L <= 64");
    if (!(2 * majority > L) || majority > L) throw DomainError("scenario: majority must exceed L/2");
    if (!(a >= 1)) throw DomainError("scenario: separation a must be at least 1");
    if (n < 20) throw DomainError("scenario: n too small");
    if (reps < 1) throw DomainError("scenario: need at least one replication");
    if (kind == DgpKind::highdim && (dimension() < 11 || highdim_target < 0 || highdim_target >= dimension()))
      throw DomainError("scenario: highdim needs d >= 11 and a target inside it");
    if (kind != DgpKind::highdim && dimension() < 2) throw DomainError("scenario: need at least two covariates");
    if (kind == DgpKind::ate && target_size < 1) throw DomainError("scenario: empty target sample");
    tuning.validate();
  }
};

// True parameters of one site.
struct SiteTruth {
  double intercept = 0.0;
  Vector theta;         // slope coefficients (ate: the outcome slopes zeta)
  double beta = 0.0;    // target functional
  Vector mean_shift;    // covariate mean (ate only, else zero)
};

namespace detail {

inline double cycled(const std::vector<double>& v, std::size_t i) { return v[i % v.size()]; }

inline const std::vector<double>& site_intercepts() {
  static const std::vector<double> mu{0.05, -0.05, 0.1, -0.1, 0.05, -0.05, 0.1, -0.1, 0.0, 0.0};
  return mu;
}

inline Vector leading(int p, std::initializer_list<double> head) {
  Vector v = Vector::Zero(p);
  Index j = 0;
  for (double x : head) {
    if (j >= p) break;
    v(j++) = x;
  }
  return v;
}

// Lower Cholesky factor of scale * 0.6^|j-k|.
inline Matrix ar_factor(int p, double scale) {
  Matrix S(p, p);
  for (int j = 0; j < p; ++j)
    for (int k = 0; k < p; ++k) S(j, k) = scale * std::pow(0.6, std::abs(j - k));
  Eigen::LLT<Matrix> llt(S);
  return llt.matrixL();
}

inline Matrix gaussian_rows(long n, const Matrix& factor, const Vector& mean, RandomStream& rng) {
  const Index p = factor.rows();
  Matrix Z(n, p);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < p; ++j) Z(i, j) = rng.normal();
  Matrix X = Z * factor.transpose();
  X.rowwise() += mean.transpose();
  return X;
}

}  // namespace detail

// Non-majority sites follow the listed perturbations in order (cycled when
// there are more of them than listed values).
inline std::vector<SiteTruth> site_truth(DgpKind kind, int L, int majority, double a, int p, Index highdim_target = 10) {
  std::vector<SiteTruth> out(static_cast<std::size_t>(L));
  const bool eight = majority == 8;
  for (int l = 0; l < L; ++l) {
    auto& t = out[l];
    const std::size_t off = static_cast<std::size_t>(l - majority);
    const bool minority = l >= majority;
    switch (kind) {
      case DgpKind::lowdim: {
        t.intercept = detail::cycled(detail::site_intercepts(), l);
        t.theta = detail::leading(p, {0.5, 0.5, 0.5, 0.5, 0.5, 0.1, 0.1, 0.1});
        if (minority) {
          std::vector<double> shift = eight ? std::vector<double>{-0.3, -0.1} : std::vector<double>{-0.3, -0.2, -0.1, 0.1};
          for (Index j = 0; j < std::min<Index>(5, p); ++j) t.theta(j) = 0.5 + detail::cycled(shift, off) * a;
        }
        t.beta = t.theta(0);
        t.mean_shift = Vector::Zero(p);
        break;
      }
      case DgpKind::highdim: {
        const int one = l + 1;
        t.intercept = (one == 1 || one == 2 || one == 3 || one == 7 || one == 9) ? 0.05 : 0.0;
        t.theta = Vector::Zero(p);
        for (Index j = 1; j <= 11; ++j) t.theta(j - 1) = 0.1 * static_cast<double>(j) - 0.6;
        if (minority) {
          std::vector<double> base = eight ? std::vector<double>{0.2, 0.15} : std::vector<double>{0.2, 0.2, 0.15, 0.15};
          for (Index j = 6; j <= 11; ++j) t.theta(j - 1) += detail::cycled(base, off) + 0.05 * a;
        }
        t.beta = t.theta(highdim_target);
        t.mean_shift = Vector::Zero(p);
        break;
      }
      case DgpKind::ate: {
        const int one = l + 1;
        t.intercept = detail::cycled(detail::site_intercepts(), l);
        t.theta = detail::leading(p, {0.5, 0.5, 0.5, 0.5, 0.5, 0.1, 0.1, 0.1});
        t.beta = -1.0;
        if (minority) {
          std::vector<double> d = eight ? std::vector<double>{-0.2, -0.1} : std::vector<double>{-0.2, -0.2, -0.1, -0.1};
          t.beta += detail::cycled(d, off) * a;
        }
        bool shifted = one == 4 || one == 5 || one == 6 || one == 8 || one == 10;
        t.mean_shift = shifted ? detail::leading(p, {0.5, 0.5}) : Vector::Zero(p);
        break;
      }
    }
  }
  return out;
}

inline std::vector<SiteTruth> site_truth(const Scenario& sc) {
  return site_truth(sc.kind, sc.L, sc.majority, sc.a, sc.dimension(), sc.highdim_target);
}

inline SiteSet prevailing_set(const Scenario& sc) {
  SiteSet v;
  for (int l = 0; l < sc.majority; ++l) v.insert(l);
  return v;
}

// True global (squared slope distance) and local (beta difference) values in
// table order.
inline std::pair<std::vector<double>, std::vector<double>> true_dissimilarities(const std::vector<SiteTruth>& t) {
  const int L = static_cast<int>(t.size());
  std::vector<double> g, loc;
  for (int l = 0; l < L; ++l)
    for (int k = l + 1; k < L; ++k) {
      g.push_back((t[l].theta - t[k].theta).squaredNorm());
      loc.push_back(t[l].beta - t[k].beta);
    }
  return {g, loc};
}

struct RegressionSite {
  Matrix X;
  Vector y;
};

struct AteData {
  std::vector<CausalSiteData> sites;
  Matrix target;
};

// Truth and covariance factors are built once per scenario.
class ScenarioDgp {
 public:
  explicit ScenarioDgp(const Scenario& sc) : sc_(sc), truth_(site_truth(sc)) {
    const int p = sc.dimension();
    factor_ = detail::ar_factor(p, sc.kind == DgpKind::highdim ? 0.5 : 1.0);
  }

  const std::vector<SiteTruth>& truth() const { return truth_; }
  double target_value() const { return truth_.front().beta; }

  std::vector<RegressionSite> lowdim(RandomStream& rng) const {
    std::vector<RegressionSite> out;
    for (const auto& t : truth_) {
      RegressionSite s;
      s.X = detail::gaussian_rows(sc_.n, factor_, t.mean_shift, rng);
      s.y.resize(sc_.n);
      for (long i = 0; i < sc_.n; ++i) s.y(i) = rng.bernoulli(expit(t.intercept + s.X.row(i).dot(t.theta))) ? 1.0 : 0.0;
      out.push_back(std::move(s));
    }
    return out;
  }

  std::vector<RegressionSite> highdim(RandomStream& rng) const {
    std::vector<RegressionSite> out;
    for (const auto& t : truth_) {
      RegressionSite s;
      s.X = detail::gaussian_rows(sc_.n, factor_, t.mean_shift, rng);
      s.y = (s.X * t.theta).array() + t.intercept;
      for (long i = 0; i < sc_.n; ++i) s.y(i) += rng.normal();
      out.push_back(std::move(s));
    }
    return out;
  }

  AteData ate(RandomStream& rng) const {
    AteData out;
    for (const auto& t : truth_) {
      CausalSiteData d;
      d.X = detail::gaussian_rows(sc_.n, factor_, t.mean_shift, rng);
      d.A.resize(sc_.n);
      d.Y.resize(sc_.n);
      for (long i = 0; i < sc_.n; ++i) {
        double x1 = d.X(i, 0), x2 = d.X(i, 1);
        d.A(i) = rng.bernoulli(expit(0.5 * x1 - 0.5 * x2 + 0.1 * x1 * x2)) ? 1.0 : 0.0;
        d.Y(i) = t.intercept + d.X.row(i).dot(t.theta) + t.beta * d.A(i) + rng.normal();
      }
      out.sites.push_back(std::move(d));
    }
    out.target = detail::gaussian_rows(sc_.target_size, factor_, Vector::Zero(factor_.rows()), rng);
    return out;
  }

 private:
  Scenario sc_;
  std::vector<SiteTruth> truth_;
  Matrix factor_;
};

inline std::vector<RegressionSite> gen_lowdim(const Scenario& sc, RandomStream& rng) { return ScenarioDgp(sc).lowdim(rng); }
inline std::vector<RegressionSite> gen_highdim(const Scenario& sc, RandomStream& rng) { return ScenarioDgp(sc).highdim(rng); }
inline AteData gen_ate(const Scenario& sc, RandomStream& rng) { return ScenarioDgp(sc).ate(rng); }

// Propensity on X1, X2 main effects only; outcome and density on all
// covariates.
inline CausalBases simulation_bases() {
  CausalBases b;
  b.propensity = {0, 1};
  return b;
}

struct MethodOutcome {
  bool covered = false;
  double lo = 0.0, hi = 0.0;
  double length = 0.0;
  int pieces = 1;
};

struct RepRecord {
  int rep = 0;
  bool failed = false;
  std::string error;
  std::map<std::string, MethodOutcome> methods;
  double vmc_point = 0.0, vmc_se = 0.0;
  double rho = 0.0;
  int retained = 0;
  bool rifl_matches_oracle = false;
  double sampling_gap = 0.0;  // min over draws of the max standardized gap
  double sampling_bound = 0.0;
};

struct MethodSummary {
  std::string method;
  int valid = 0;
  double coverage = 0.0;
  double mc_se = 0.0;
  double avg_length = 0.0;
};

struct ExperimentReport {
  Scenario scenario;
  std::vector<std::string> methods;
  std::vector<MethodSummary> summary;
  std::vector<RepRecord> records;
  int failed = 0;
  bool valid = true;
  double runtime_seconds = 0.0;  // not part of the emitted files

  const MethodSummary& method(const std::string& m) const {
    for (const auto& s : summary)
      if (s.method == m) return s;
    throw DomainError("report has no method " + m);
  }

  static std::string csv_header() {
    return "method,kind,L,majority,n,dim,a,reps,seed,coverage,mc_se,avg_length,valid_reps,failed_reps,valid\n";
  }

  std::string csv_rows() const {
    std::string out;
    char buf[512];
    for (const auto& s : summary) {
      std::snprintf(buf, sizeof buf, "%s,%s,%d,%d,%ld,%d,%.17g,%d,%llu,%.17g,%.17g,%.17g,%d,%d,%d\n", s.method.c_str(),
                    kind_name(scenario.kind), scenario.L, scenario.majority, scenario.n, scenario.dimension(),
                    scenario.a, scenario.reps, static_cast<unsigned long long>(scenario.seed), s.coverage, s.mc_se,
                    s.avg_length, s.valid, failed, valid ? 1 : 0);
      out += buf;
    }
    return out;
  }

  std::string to_csv() const { return csv_header() + csv_rows(); }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    const auto& sc = scenario;
    j["scenario"] = {{"kind", kind_name(sc.kind)}, {"L", sc.L},          {"majority", sc.majority},
                     {"n", sc.n},                  {"dim", sc.dimension()}, {"a", sc.a},
                     {"reps", sc.reps},            {"seed", sc.seed},    {"alpha", sc.tuning.alpha},
                     {"nu", sc.tuning.nu_value()}, {"resamples", sc.tuning.resamples},
                     {"prop", sc.tuning.prop},     {"majority_fraction", sc.tuning.majority_fraction}};
    j["valid"] = valid;
    j["failed_reps"] = failed;
    auto& sm = j["summary"] = nlohmann::ordered_json::array();
    for (const auto& s : summary)
      sm.push_back({{"method", s.method}, {"coverage", s.coverage}, {"mc_se", s.mc_se}, {"avg_length", s.avg_length},
                    {"valid_reps", s.valid}});
    auto& rec = j["records"] = nlohmann::ordered_json::array();
    for (const auto& r : records) {
      nlohmann::ordered_json x{{"rep", r.rep}, {"failed", r.failed}};
      if (r.failed) {
        x["error"] = r.error;
      } else {
        for (const auto& m : methods) {
          const auto& o = r.methods.at(m);
          x["methods"][m] = {{"covered", o.covered}, {"lo", o.lo}, {"hi", o.hi}, {"length", o.length}, {"pieces", o.pieces}};
        }
        x["rho"] = r.rho;
        x["retained"] = r.retained;
      }
      rec.push_back(std::move(x));
    }
    return j;
  }
};

namespace detail {

inline MethodOutcome outcome_of(const Interval& iv, double truth) {
  return {iv.contains(truth), iv.lo, iv.hi, iv.length(), 1};
}

inline MethodOutcome outcome_of(const ConfidenceRegion& r, double truth) {
  return {r.contains(truth), r.intervals.front().lo, r.intervals.back().hi, r.length(), static_cast<int>(r.intervals.size())};
}

inline bool wants(const std::vector<std::string>& m, const char* name) {
  return std::find(m.begin(), m.end(), name) != m.end();
}

inline double vmc_point(const RiflInputs& in) { return ivw_aggregate(in.summaries, vmc_set(in.table)).point(); }

}  // namespace detail

// Site summaries and dissimilarities for one replication's data.
inline RiflInputs lowdim_inputs(const std::vector<RegressionSite>& data) {
  std::vector<ParametricSiteFit> fits;
  for (const auto& s : data) fits.push_back(fit_parametric_site(s.X, s.y, stats::Family::logistic));
  return lowdim_table(fits, Functional::coordinate(0));
}

inline RiflInputs ate_inputs_for(const std::vector<CausalSiteData>& sites, const TargetMeans& tm, const CausalBases& b) {
  std::vector<AteEstimate> est;
  for (const auto& d : sites) est.push_back(ate_site_estimate(d, tm, b));
  return ate_inputs(est);
}

// One replication.  Streams: data (seed/"data", r), splits and folds
// (seed/"split"|"fold", r*2^20 + l), resampling (seed/"rifl", base r*2^20),
// median (seed/"median", r), m-out-of-n replicate j (seed/"mnb", r*2^20 + j).
inline RepRecord run_replication(const Scenario& sc, const ScenarioDgp& dgp, const std::vector<std::string>& methods,
                                 int r) {
  RepRecord rec;
  rec.rep = r;
  const auto ur = static_cast<std::uint64_t>(r);
  const double truth = dgp.target_value();
  RandomStream data_rng(derive_seed(sc.seed, "data"), ur);

  RiflInputs in;
  std::vector<RegressionSite> reg;
  AteData ate;
  TargetMeans tm;
  const CausalBases bases = simulation_bases();
  switch (sc.kind) {
    case DgpKind::lowdim:
      reg = dgp.lowdim(data_rng);
      in = lowdim_inputs(reg);
      break;
    case DgpKind::highdim: {
      reg = dgp.highdim(data_rng);
      HighDimConfig cfg = sc.highdim;
      cfg.target = sc.highdim_target;
      std::vector<HighDimSite> sites;
      for (int l = 0; l < sc.L; ++l) {
        RandomStream split(derive_seed(sc.seed, "split"), stream_index(ur, static_cast<std::uint64_t>(l)));
        RandomStream fold(derive_seed(sc.seed, "fold"), stream_index(ur, static_cast<std::uint64_t>(l)));
        sites.emplace_back(reg[l].X, reg[l].y, stats::Family::linear, split, fold, cfg);
      }
      in = highdim_pipeline(sites);
      break;
    }
    case DgpKind::ate:
      ate = dgp.ate(data_rng);
      tm = target_means(ate.target, bases);
      in = ate_inputs_for(ate.sites, tm, bases);
      break;
  }
  const auto& s = in.summaries;
  const auto& t = in.table;
  const double alpha = sc.tuning.alpha;
  const SiteSet truth_set = prevailing_set(sc);

  SiteSet vset = vmc_set(t);
  auto vmc = ivw_aggregate(s, vset);
  rec.vmc_point = vmc.point();
  rec.vmc_se = vmc.se();

  const bool need_rifl = detail::wants(methods, "rifl") || detail::wants(methods, "rifl80") || sc.sampling_check;
  if (need_rifl) {
    const std::uint64_t rseed = derive_seed(sc.seed, "rifl");
    auto draws = resample_dissimilarities(t, sc.tuning.resamples, rseed, stream_index(ur, 0));
    if (detail::wants(methods, "rifl")) {
      auto an = analyze_resamples(t, draws, sc.tuning.majority_fraction);
      auto region = region_from_analysis(s, t, an, sc.tuning);
      rec.methods["rifl"] = detail::outcome_of(region, truth);
      rec.rho = region.rho;
      rec.retained = region.retained_count;
      rec.rifl_matches_oracle =
          region.intervals.size() == 1 && region.intervals.front() == oracle_ci(s, truth_set, sc.tuning.alpha1());
    }
    if (detail::wants(methods, "rifl80")) {
      TuningConfig c80 = sc.tuning;
      c80.majority_fraction = 0.8;
      auto an = analyze_resamples(t, draws, c80.majority_fraction);
      rec.methods["rifl80"] = detail::outcome_of(region_from_analysis(s, t, an, c80), truth);
    }
    if (sc.sampling_check) {
      auto [tg, tl] = true_dissimilarities(dgp.truth());
      double best = std::numeric_limits<double>::infinity();
      for (const auto& d : draws) best = std::min(best, max_standardized_gap(d, t, tg, tl));
      rec.sampling_gap = best;
      rec.sampling_bound =
          sampling_accuracy(sc.tuning.resamples, sc.tuning.nu_value(), sc.L, static_cast<double>(sc.n));
    }
  }
  if (detail::wants(methods, "vmc")) rec.methods["vmc"] = detail::outcome_of(naive_ci(s, vset, alpha), truth);
  if (detail::wants(methods, "mv")) {
    SiteSet mv = majority_vote_set(build_voting_matrix(t, screening_threshold(t.sites(), t.has_global())));
    rec.methods["mv"] = detail::outcome_of(naive_ci(s, mv, alpha), truth);
  }
  if (detail::wants(methods, "median")) {
    RandomStream mrng(derive_seed(sc.seed, "median"), ur);
    rec.methods["median"] = detail::outcome_of(median_ci(s, alpha, sc.median_draws, mrng).interval, truth);
  }
  if (detail::wants(methods, "oracle")) rec.methods["oracle"] = detail::outcome_of(oracle_ci(s, truth_set, alpha), truth);
  if (detail::wants(methods, "mnb")) {
    const long m = mnb_subsample_size(sc.n, sc.mnb_upsilon);
    auto replicate = [&](int j) {
      RandomStream b(derive_seed(sc.seed, "mnb"), stream_index(ur, static_cast<std::uint64_t>(j)));
      if (sc.kind == DgpKind::lowdim) {
        std::vector<RegressionSite> sub;
        for (const auto& site : reg) {
          auto rows = resample_rows(sc.n, m, b);
          sub.push_back({take_rows(site.X, rows), take(site.y, rows)});
        }
        return detail::vmc_point(lowdim_inputs(sub));
      }
      std::vector<CausalSiteData> sub;
      for (const auto& site : ate.sites) {
        auto rows = resample_rows(sc.n, m, b);
        sub.push_back({take_rows(site.X, rows), take(site.A, rows), take(site.Y, rows)});
      }
      return detail::vmc_point(ate_inputs_for(sub, tm, bases));
    };
    rec.methods["mnb"] = detail::outcome_of(mnb_ci(rec.vmc_point, sc.n, m, sc.mnb_draws, replicate, alpha).interval, truth);
  }
  return rec;
}

// All replications, then the bias-aware interval from the cross-replication
// calibration of the VMC estimator.
inline ExperimentReport run_experiment(const Scenario& sc, std::vector<std::string> methods) {
  sc.validate();
  if (methods.empty()) throw DomainError("run_experiment: no methods requested");
  for (const auto& m : methods) {
    if (!detail::wants(known_methods(), m.c_str())) throw DomainError("run_experiment: unknown method " + m);
    if (std::count(methods.begin(), methods.end(), m) > 1) throw DomainError("run_experiment: duplicate method " + m);
  }
  if (sc.kind == DgpKind::highdim && detail::wants(methods, "mnb"))
    throw DomainError("run_experiment: m-out-of-n bootstrap is not available for the high-dimensional scenario");

  ExperimentReport rep;
  rep.scenario = sc;
  rep.methods = methods;
  rep.records.resize(static_cast<std::size_t>(sc.reps));
  const ScenarioDgp dgp(sc);
  parallel_for(static_cast<std::size_t>(sc.reps), [&](std::size_t r) {
    try {
      rep.records[r] = run_replication(sc, dgp, methods, static_cast<int>(r));
    } catch (const std::exception& e) {
      RepRecord f;
      f.rep = static_cast<int>(r);
      f.failed = true;
      f.error = e.what();
      rep.records[r] = std::move(f);
    }
  });

  std::vector<double> pts, ses;
  for (const auto& r : rep.records) {
    if (r.failed) {
      ++rep.failed;
      continue;
    }
    pts.push_back(r.vmc_point);
    ses.push_back(r.vmc_se);
  }
  rep.valid = rep.failed <= 0.02 * sc.reps;

  const double truth = dgp.target_value();
  if (detail::wants(methods, "oba") && pts.size() >= 2) {
    auto cal = oba_calibrate(pts, ses, truth);
    for (auto& r : rep.records) {
      if (r.failed) continue;
      r.methods["oba"] = detail::outcome_of(oba_ci(r.vmc_point, cal.ratio * r.vmc_se, cal.bias, sc.tuning.alpha).interval, truth);
    }
  }

  for (const auto& m : methods) {
    MethodSummary s;
    s.method = m;
    double cov = 0.0, len = 0.0;
    for (const auto& r : rep.records) {
      auto it = r.methods.find(m);
      if (r.failed || it == r.methods.end()) continue;
      ++s.valid;
      cov += it->second.covered;
      len += it->second.length;
    }
    if (s.valid > 0) {
      s.coverage = cov / s.valid;
      s.avg_length = len / s.valid;
      s.mc_se = std::sqrt(s.coverage * (1 - s.coverage) / s.valid);
    }
    rep.summary.push_back(s);
  }
  return rep;
}

}  // namespace rifl
