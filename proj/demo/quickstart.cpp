// Ten hospitals fit the same logistic model; four of them disagree with the
// rest.  Each site writes a summary record, the coordinator reads the records
// back and reports a confidence region for the first coefficient.
#include <cstdio>
#include <filesystem>

#include "rifl/federated.hpp"
#include "rifl/sim.hpp"

using namespace rifl;
namespace fs = std::filesystem;

int main() {
  Scenario sc;
  sc.kind = DgpKind::lowdim;
  sc.n = 1000;
  sc.a = 2.0;
  ScenarioDgp dgp(sc);
  RandomStream rng(2024, 0);
  auto data = dgp.lowdim(rng);

  fs::path dir = fs::temp_directory_path() / "rifl_quickstart";
  fs::create_directories(dir);
  for (std::size_t l = 0; l < data.size(); ++l) {
    auto fit = fit_parametric_site(data[l].X, data[l].y, stats::Family::logistic);
    auto rec = parametric_record(static_cast<int>(l) + 1, fit, 0);
    write_file((dir / ("site" + std::to_string(l + 1) + ".json")).string(), serialize_record(rec));
  }

  std::vector<SiteRecord> recs;
  for (int l = 1; l <= 10; ++l) recs.push_back(parse_record(read_file((dir / ("site" + std::to_string(l) + ".json")).string())));
  auto in = inputs_from_records(recs);

  TuningConfig cfg;
  auto region = rifl_confidence_region(in.summaries, in.table, cfg, 7);
  std::printf("true value %.3f\n", dgp.target_value());
  std::printf("RIFL region:");
  for (const auto& iv : region.intervals) std::printf(" [%.4f, %.4f]", iv.lo, iv.hi);
  std::printf("  (rho %.3f, %d of %d draws kept)\n", region.rho, region.retained_count, region.resamples);

  auto vmc = vmc_ci(in.summaries, in.table, cfg.alpha);
  std::printf("VMC interval [%.4f, %.4f] over sites", vmc.interval.lo, vmc.interval.hi);
  for (int l : vmc_set(in.table).to_vector()) std::printf(" %d", l + 1);
  auto oracle = oracle_ci(in.summaries, prevailing_set(sc), cfg.alpha);
  std::printf("\noracle [%.4f, %.4f]\n\nsite  estimate  p_hat\n", oracle.lo, oracle.hi);
  for (int l = 0; l < 10; ++l)
    std::printf("%4d  %8.4f  %.2f\n", l + 1, in.summaries[l].point(), region.generalizability[l]);
  fs::remove_all(dir);
}
