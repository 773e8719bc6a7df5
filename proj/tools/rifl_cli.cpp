// rifl: site export, coordinator aggregation, simulation driver.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "rifl/federated.hpp"
#include "rifl/sim.hpp"

namespace fs = std::filesystem;
using namespace rifl;

namespace {

constexpr int kExitInvalidExperiment = 2;
constexpr int kExitUsage = 64;

struct TuningFlags {
  double alpha = 0.05;
  std::optional<double> nu;
  int resamples = 500;
  double prop = 0.10;
  double majority_fraction = 0.5;
  std::uint64_t seed = 1;

  TuningConfig config() const {
    TuningConfig c;
    c.alpha = alpha;
    c.nu = nu;
    c.resamples = resamples;
    c.prop = prop;
    c.majority_fraction = majority_fraction;
    return c;
  }
};

void add_tuning(CLI::App* app, TuningFlags& t) {
  app->add_option("--alpha", t.alpha, "Nominal level")->capture_default_str();
  app->add_option("--nu", t.nu, "Resampling error level (default alpha/20)");
  app->add_option("--resamples", t.resamples, "Resample count M")->capture_default_str();
  app->add_option("--prop", t.prop, "Retained proportion used to choose rho")->capture_default_str();
  app->add_option("--majority-fraction", t.majority_fraction, "Majority fraction (0.8 for the 80% rule)")->capture_default_str();
  app->add_option("--seed", t.seed, "Random seed")->capture_default_str();
}

std::vector<Index> parse_columns(const std::string& s) {
  std::vector<Index> out;
  if (s.empty()) return out;
  std::stringstream ss(s);
  std::string x;
  while (std::getline(ss, x, ',')) {
    long v = std::stol(x);
    if (v < 1) throw DomainError("covariate indices are 1-based");
    out.push_back(static_cast<Index>(v - 1));
  }
  return out;
}

std::vector<SiteRecord> load_records(const std::string& dir) {
  std::vector<SiteRecord> out;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) out.push_back(parse_record(read_file(f.string())));
  return out;
}

// --- site-export --------------------------------------------------------

struct ExportFlags {
  std::string data, out, model = "logistic", target_sample, peers, propensity;
  int site_id = 1;
  int round = 1;
  Index target = 1;
  std::uint64_t seed = 1;
};

int cmd_site_export(const ExportFlags& f) {
  auto table = parse_numeric_table(read_file(f.data));
  const Matrix& v = table.values;
  const long n = static_cast<long>(v.rows());
  SiteRecord rec;
  if (f.model == "logistic" || f.model == "linear") {
    auto family = f.model == "logistic" ? stats::Family::logistic : stats::Family::linear;
    Matrix X = v.rightCols(v.cols() - 1);
    if (f.target < 1 || f.target > X.cols()) throw DomainError("--target-coordinate out of range");
    rec = parametric_record(f.site_id, fit_parametric_site(X, v.col(0), family), f.target - 1);
  } else if (f.model == "ate") {
    if (v.cols() < 3) throw DomainError("ate data needs outcome, treatment and covariate columns");
    if (f.target_sample.empty()) throw DomainError("--target-sample is required for the ate model");
    CausalSiteData d{v.rightCols(v.cols() - 2), v.col(1), v.col(0)};
    auto target = parse_numeric_table(read_file(f.target_sample)).values;
    CausalBases b;
    b.propensity = parse_columns(f.propensity);
    auto e = ate_site_estimate(d, target_means(target, b), b);
    rec = univariate_record(f.site_id, e.theta, e.se(), n);
  } else if (f.model == "highdim") {
    Matrix X = v.rightCols(v.cols() - 1);
    HighDimConfig cfg;
    if (f.target < 1 || f.target > X.cols()) throw DomainError("--target-coordinate out of range");
    cfg.target = f.target - 1;
    const auto stream = static_cast<std::uint64_t>(f.site_id - 1);
    RandomStream split(derive_seed(f.seed, "split"), stream), fold(derive_seed(f.seed, "fold"), stream);
    HighDimSite site(X, v.col(0), stats::Family::linear, split, fold, cfg);
    if (f.round == 1) {
      rec = highdim_round1_record(f.site_id, site);
    } else {
      if (f.peers.empty()) throw DomainError("--peers is required in round 2");
      rec = highdim_round2_record(f.site_id, site, load_records(f.peers));
    }
  } else {
    throw DomainError("unknown model " + f.model);
  }
  write_file(f.out, serialize_record(rec));
  std::cerr << "wrote " << mode_name(rec.mode) << " record for site " << rec.site_id << " (n = " << rec.n << ") to "
            << f.out << "\n";
  return 0;
}

// --- aggregate ----------------------------------------------------------

int cmd_aggregate(const std::string& dir, const TuningFlags& t, const std::string& out, bool comparators) {
  auto recs = load_records(dir);
  std::vector<int> ids;
  for (const auto& r : recs) ids.push_back(r.site_id);
  std::sort(ids.begin(), ids.end());
  auto in = inputs_from_records(recs);
  auto cfg = t.config();
  auto region = rifl_confidence_region(in.summaries, in.table, cfg, t.seed);

  nlohmann::ordered_json j;
  j["sites"] = ids;
  j["alpha"] = cfg.alpha;
  j["rho"] = region.rho;
  j["retained"] = region.retained_count;
  j["resamples"] = region.resamples;
  std::printf("sites %zu, retained %d of %d resamples, rho %.4g%s\n", ids.size(), region.retained_count,
              region.resamples, region.rho, region.rho_rule_unmet ? " (prop rule unmet, rho = 1)" : "");
  if (!region.multivariate()) {
    auto& segs = j["intervals"] = nlohmann::ordered_json::array();
    std::printf("%g%% confidence region:", 100 * (1 - cfg.alpha));
    for (const auto& iv : region.intervals) {
      std::printf(" [%.6g, %.6g]", iv.lo, iv.hi);
      segs.push_back({iv.lo, iv.hi});
    }
    std::printf("\nmidpoint %.6g\n", region.midpoint);
    j["midpoint"] = region.midpoint;
  } else {
    std::printf("%zu ellipsoids in the union\n", region.ellipsoids.size());
    j["ellipsoids"] = region.ellipsoids.size();
  }
  std::printf("site  p_hat\n");
  auto& gen = j["generalizability"] = nlohmann::ordered_json::object();
  for (std::size_t l = 0; l < ids.size(); ++l) {
    std::printf("%4d  %.3f\n", ids[l], region.generalizability[l]);
    gen[std::to_string(ids[l])] = region.generalizability[l];
  }
  if (comparators && !region.multivariate()) {
    auto v = vmc_ci(in.summaries, in.table, cfg.alpha);
    std::vector<int> vset;
    for (int l : vmc_set(in.table).to_vector()) vset.push_back(ids[l]);
    RandomStream rng(derive_seed(t.seed, "median"), 0);
    auto m = median_ci(in.summaries, cfg.alpha, 500, rng);
    std::printf("vmc    [%.6g, %.6g] over sites", v.interval.lo, v.interval.hi);
    for (int id : vset) std::printf(" %d", id);
    std::printf("\nmedian [%.6g, %.6g]\n", m.interval.lo, m.interval.hi);
    j["vmc"] = {{"interval", {v.interval.lo, v.interval.hi}}, {"sites", vset}};
    j["median"] = {{"interval", {m.interval.lo, m.interval.hi}}};
  }
  if (!out.empty()) write_file(out, j.dump(2) + "\n");
  return 0;
}

// --- tune ----------------------------------------------------------------

int cmd_tune(const std::string& dir, const TuningFlags& t, const std::vector<double>& props) {
  auto in = inputs_from_records(load_records(dir));
  auto cfg = t.config();
  cfg.validate();
  auto draws = resample_dissimilarities(in.table, cfg.resamples, t.seed);
  auto an = analyze_resamples(in.table, draws, cfg.majority_fraction);
  std::printf("prop    rho       retained  length\n");
  for (double p : props) {
    TuningConfig c = cfg;
    c.prop = p;
    auto region = region_from_analysis(in.summaries, in.table, an, c);
    std::printf("%-7.3g %-9.4g %-9d %.6g\n", p, region.rho, region.retained_count,
                region.multivariate() ? std::nan("") : region.length());
  }
  return 0;
}

// --- simulate -------------------------------------------------------------

struct SimFlags {
  std::string kind = "lowdim", methods = "rifl,vmc,median,oracle", out_dir = ".";
  int L = 10, majority = 6, reps = 500, dim = 0;
  long n = 1000;
  double a = 1.0;
};

int cmd_simulate(const SimFlags& f, const TuningFlags& t) {
  Scenario sc;
  sc.kind = parse_kind(f.kind);
  sc.L = f.L;
  sc.majority = f.majority;
  sc.n = f.n;
  sc.dim = f.dim;
  sc.a = f.a;
  sc.reps = f.reps;
  sc.seed = t.seed;
  sc.tuning = t.config();
  std::vector<std::string> methods;
  std::stringstream ss(f.methods);
  std::string m;
  while (std::getline(ss, m, ','))
    if (!m.empty()) methods.push_back(m);

  auto t0 = std::chrono::steady_clock::now();
  auto report = run_experiment(sc, methods);
  report.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  fs::create_directories(f.out_dir);
  write_file((fs::path(f.out_dir) / "report.csv").string(), report.to_csv());
  write_file((fs::path(f.out_dir) / "report.json").string(), report.to_json().dump(1) + "\n");
  std::cout << report.to_csv();
  for (const auto& r : report.records)
    if (r.failed) std::cerr << "rep " << r.rep << " failed: " << r.error << "\n";
  std::fprintf(stderr, "%d replications in %.1f s, %d failed\n", sc.reps, report.runtime_seconds, report.failed);
  if (!report.valid) {
    std::cerr << "experiment invalid: more than 2% of replications failed\n";
    return kExitInvalidExperiment;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust inference for federated meta-learning"};
  app.require_subcommand(1);

  ExportFlags ex;
  auto* exp = app.add_subcommand("site-export", "Summarize local data into a site record");
  exp->add_option("--data", ex.data, "Delimited numeric table: outcome first (then treatment for ate)")->required();
  exp->add_option("--out", ex.out, "Record file to write")->required();
  exp->add_option("--site-id", ex.site_id, "1-based site id")->required()->check(CLI::PositiveNumber);
  exp->add_option("--model", ex.model, "logistic, linear, ate or highdim")
      ->check(CLI::IsMember({"logistic", "linear", "ate", "highdim"}))
      ->capture_default_str();
  exp->add_option("--target-coordinate", ex.target, "1-based covariate whose coefficient is reported")->capture_default_str();
  exp->add_option("--target-sample", ex.target_sample, "Target covariates (ate)");
  exp->add_option("--propensity-covariates", ex.propensity, "1-based covariates in the propensity model (ate; default all)");
  exp->add_option("--round", ex.round, "Protocol round (highdim)")->check(CLI::Range(1, 2))->capture_default_str();
  exp->add_option("--peers", ex.peers, "Directory of round-1 records (highdim round 2)");
  exp->add_option("--seed", ex.seed, "Seed for the sample split and folds")->capture_default_str();

  TuningFlags agg_t;
  std::string agg_dir, agg_out;
  bool agg_cmp = false;
  auto* agg = app.add_subcommand("aggregate", "Run the analysis on a directory of site records");
  agg->add_option("--records", agg_dir, "Directory of *.json site records")->required();
  agg->add_option("--out", agg_out, "Write the analysis as JSON");
  agg->add_flag("--comparators", agg_cmp, "Also report the VMC and median intervals");
  add_tuning(agg, agg_t);

  TuningFlags tune_t;
  std::string tune_dir;
  std::vector<double> props{0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50};
  auto* tune = app.add_subcommand("tune", "Selected rho, retained draws and length across prop values");
  tune->add_option("--records", tune_dir, "Directory of *.json site records")->required();
  tune->add_option("--props", props, "Proportions to try")->delimiter(',');
  add_tuning(tune, tune_t);

  SimFlags sf;
  TuningFlags sim_t;
  auto* sim = app.add_subcommand("simulate", "Coverage experiment on a synthetic scenario");
  sim->add_option("--kind", sf.kind, "lowdim, highdim or ate")
      ->check(CLI::IsMember({"lowdim", "highdim", "ate"}))
      ->capture_default_str();
  sim->add_option("--a", sf.a, "Separation level")->capture_default_str();
  sim->add_option("--n", sf.n, "Per-site sample size")->capture_default_str();
  sim->add_option("--reps", sf.reps, "Replications")->capture_default_str();
  sim->add_option("--L", sf.L, "Number of sites")->capture_default_str();
  sim->add_option("--majority", sf.majority, "Number of prevailing sites (6 or 8)")->capture_default_str();
  sim->add_option("--dim", sf.dim, "Covariate dimension (0: 10, or 200 for highdim)")->capture_default_str();
  sim->add_option("--methods", sf.methods, "Comma list of rifl,rifl80,vmc,mv,median,mnb,oba,oracle")->capture_default_str();
  sim->add_option("--out-dir", sf.out_dir, "Directory for report.csv and report.json")->capture_default_str();
  add_tuning(sim, sim_t);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*exp) return cmd_site_export(ex);
    if (*agg) return cmd_aggregate(agg_dir, agg_t, agg_out, agg_cmp);
    if (*tune) return cmd_tune(tune_dir, tune_t, props);
    if (*sim) return cmd_simulate(sf, sim_t);
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const MajorityRuleError& e) {
    const auto& d = e.diagnostics();
    std::cerr << "error: " << e.what() << " (largest resampled clique " << d.largest_clique << ", rho " << d.rho << ")\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
