#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include <mwaddr/planner.hpp>
#include <mwaddr/simulation.hpp>

using namespace mwaddr;

namespace {
constexpr double kTwoPi = 6.283185307179586;

GaussianModel paper_model() { return {0.843, kTwoPi * 6.4e3}; }

SequencePlan plan_for(const std::string& pattern, int loops, GaussianModel model,
                      const ApparatusConfig& cfg) {
  return make_plan(TargetPattern::parse(pattern), 45.0, PulseDescriptor::gaussian_pi(20e-6), loops, cfg, model).plan;
}

ApparatusConfig perfect_pushout() {
  ApparatusConfig cfg;
  cfg.pushout_survival_f4 = 0.0;
  cfg.pushout_survival_f3 = 1.0;
  return cfg;
}
}  // namespace

TEST(LoadLattice, EmptyAndFull) {
  const ApparatusConfig cfg;
  Rng rng(1);
  EXPECT_TRUE(load_lattice(200, 0.0, cfg, ThermalMode::resampled, rng).empty());
  const auto full = load_lattice(200, 1.0, cfg, ThermalMode::resampled, rng);
  ASSERT_EQ(full.size(), 200u);
  for (std::size_t i = 0; i < full.size(); ++i) {
    EXPECT_EQ(full[i].site, static_cast<int>(i));
    EXPECT_EQ(full[i].state, AtomState::zero);
  }
}

TEST(LoadLattice, BinomialMeanOccupancy) {
  const ApparatusConfig cfg;
  Rng rng(2);
  const int shots = 10000;
  double sum = 0.0;
  for (int s = 0; s < shots; ++s) sum += static_cast<double>(load_lattice(200, 0.5, cfg, ThermalMode::off, rng).size());
  const double se = std::sqrt(200 * 0.25 / shots);
  EXPECT_NEAR(sum / shots, 100.0, 3 * se);
}

TEST(ThermalSampling, WidthsMatchClosedForm) {
  const ApparatusConfig cfg;
  Rng rng(3);
  const int n = 200000;
  double ax = 0, xx = 0, yy = 0, mean = 0;
  for (int i = 0; i < n; ++i) {
    const auto d = sample_thermal_displacement(cfg, rng);
    ax += d.axial * d.axial;
    xx += d.x * d.x;
    yy += d.y * d.y;
    mean += d.axial;
  }
  const double hbar = 1.054571817e-34, m = 2.20694657e-25;
  const double s_ax = std::sqrt(hbar * 3.4 / (2 * m * kTwoPi * 115e3));
  const double s_rad = std::sqrt(hbar * 401.0 / (2 * m * kTwoPi * 1.2e3));
  EXPECT_NEAR(std::sqrt(ax / n), s_ax, 0.01 * s_ax);
  EXPECT_NEAR(std::sqrt(xx / n), s_rad, 0.01 * s_rad);
  EXPECT_NEAR(std::sqrt(yy / n), s_rad, 0.01 * s_rad);
  EXPECT_NEAR(mean / n, 0.0, 5 * s_ax / std::sqrt(n));
  EXPECT_NEAR(s_ax, 33e-9, 1e-9);
  EXPECT_NEAR(s_rad, 3.6e-6, 0.05e-6);
}

TEST(InnerLoop, PerfectPushoutKeepsOnlyAddressedSite) {
  const ApparatusConfig cfg = perfect_pushout();
  SequencePlan plan = plan_for("0", 1, {1.0, kTwoPi * 1e3}, cfg);
  plan.pushout_survival_f4 = 0.0;
  plan.pushout_survival_f3 = 1.0;
  ShotConfig sc;
  sc.plan = plan;
  sc.p_a = 1.0;
  sc.drift_rate = 0.0;
  sc.thermal = ThermalMode::off;
  const EnsembleResult r = run_ensemble(sc, 20, cfg);
  for (const auto& shot : r.shots) {
    ASSERT_EQ(shot.survivors.size(), 1u);
    EXPECT_EQ(shot.survivors[0].site, r.reference_site);
    EXPECT_EQ(shot.survivors[0].state, AtomState::one);
  }
}

TEST(InnerLoop, NoPulsesLosesEverything) {
  const ApparatusConfig cfg = perfect_pushout();
  SequencePlan plan;
  plan.pushout_survival_f4 = 0.0;
  plan.pushout_survival_f3 = 1.0;
  Rng rng(4);
  auto atoms = load_lattice(200, 1.0, cfg, ThermalMode::resampled, rng);
  const LoopContext ctx(plan, cfg, TransferFunction(GaussianModel{1.0, 1.0}), 100, 0.0, ThermalMode::resampled);
  apply_inner_loop(atoms, ctx, rng);
  for (const auto& a : atoms) EXPECT_EQ(a.state, AtomState::lost);
}

TEST(InnerLoop, TwoLoopResonantSurvival) {
  ApparatusConfig cfg = perfect_pushout();
  SequencePlan plan = plan_for("0", 2, paper_model(), cfg);
  plan.pushout_survival_f4 = 0.0;
  plan.pushout_survival_f3 = 1.0;
  Rng rng(5);
  const long n = 100000;
  std::vector<AtomRecord> atoms(static_cast<std::size_t>(n));
  for (auto& a : atoms) a.site = 0;
  const LoopContext ctx(plan, cfg, TransferFunction(paper_model()), 0, 0.0, ThermalMode::off);
  apply_inner_loop(atoms, ctx, rng);
  long kept = 0;
  for (const auto& a : atoms) kept += a.state != AtomState::lost ? 1 : 0;
  const double p = 0.843 * 0.843;
  const double se = std::sqrt(p * (1 - p) / n);
  EXPECT_NEAR(static_cast<double>(kept) / n, p, 3 * se);
  EXPECT_NEAR(p, 0.711, 0.001);
}

TEST(InnerLoop, NoSpuriousSurvivalChannel) {
  const ApparatusConfig cfg;
  const SequencePlan plan = plan_for("0", 1, paper_model(), cfg);
  ShotConfig sc;
  sc.plan = plan;
  sc.p_a = 1.0;
  sc.drift_rate = 0.0;
  sc.thermal = ThermalMode::off;
  const long shots = 20000;
  const EnsembleResult r = run_ensemble(sc, shots, cfg, 4);
  const double split = cfg.site_splitting(45.0);
  for (int d : {1, 2, 3, 5, 10, -1, -2, -4}) {
    const long site = r.reference_site + d;
    const double bound = cfg.pushout_survival_f4 + paper_model()(d * split);
    const double freq = static_cast<double>(r.survivors_per_site[static_cast<std::size_t>(site)]) / shots;
    EXPECT_LE(freq, bound + 3 * std::sqrt(bound * (1 - bound) / shots)) << "site offset " << d;
  }
}

TEST(Drift, OffsetsFoldIntoHalfOpenInterval) {
  const double wavelength = 866e-9;
  const double a = wavelength / 2;
  for (long k = 0; k < 20000; ++k) {
    const double d = drift_offset_for_shot(10e-9, 10.0, k, a);
    EXPECT_GT(d, -wavelength / 4);
    EXPECT_LE(d, wavelength / 4);
    // The folded offset differs from the raw drift by a whole number of sites.
    const double raw = 10e-9 * 10.0 * static_cast<double>(k);
    const double n = std::round((raw - d) / a);
    EXPECT_NEAR(raw - d, n * a, 1e-15 + 1e-12 * raw);
  }
  EXPECT_DOUBLE_EQ(drift_offset_for_shot(1.0, 1.0, 1, 2.0), 1.0);
}

TEST(Drift, ZeroRateGivesZeroOffset) {
  for (long k = 0; k < 10; ++k) EXPECT_EQ(drift_offset_for_shot(0.0, 10.0, k, 433e-9), 0.0);
}

TEST(Ensemble, DeterministicAcrossRunsAndWorkers) {
  ApparatusConfig cfg;
  cfg.radial_offset = 64e-6;
  ShotConfig sc;
  sc.plan = plan_for("0,2,16,18,32,34", 2, paper_model(), cfg);
  sc.seed = 1234;
  const EnsembleResult a = run_ensemble(sc, 300, cfg, 1);
  for (unsigned w : {1u, 2u, 3u, 8u}) {
    const EnsembleResult b = run_ensemble(sc, 300, cfg, w);
    std::ostringstream sa, sb;
    write_atoms_csv(sa, a);
    write_atoms_csv(sb, b);
    EXPECT_EQ(sa.str(), sb.str()) << "workers " << w;
    EXPECT_EQ(a.survivors_per_site, b.survivors_per_site);
    for (std::size_t k = 0; k < a.shots.size(); ++k) {
      EXPECT_EQ(a.shots[k].drift_offset, b.shots[k].drift_offset);
      EXPECT_EQ(a.shots[k].loaded_sites, b.shots[k].loaded_sites);
    }
  }
  sc.seed = 1235;
  const EnsembleResult c = run_ensemble(sc, 300, cfg, 1);
  EXPECT_NE(a.survivors_per_site, c.survivors_per_site);
}

TEST(Ensemble, MonteCarloMatchesAnalyticPerSite) {
  const ApparatusConfig cfg;
  ShotConfig sc;
  sc.plan = plan_for("0,17", 2, paper_model(), cfg);
  sc.drift_rate = 0.0;
  sc.thermal = ThermalMode::off;
  sc.lattice_extent = 60;
  sc.seed = 99;
  const long shots = 100000;
  const EnsembleResult r = run_ensemble(sc, shots, cfg, 4);
  const double split = cfg.site_splitting(45.0);
  const double f4 = cfg.pushout_survival_f4, f3 = cfg.pushout_survival_f3;
  for (long off_site : {-2L, -1L, 0L, 1L, 2L, 8L, 16L, 17L, 18L, 19L}) {
    const long s = r.reference_site + off_site;
    // Per-loop survival with two pulses at 0 and 17 sites, then M = 2 loops.
    const long off = s - r.reference_site;
    const double p0 = paper_model()(off * split), p1 = paper_model()((off - 17) * split);
    const double flip = 1.0 - (1.0 - p0) * (1.0 - p1);
    const double loop = flip * f3 + (1.0 - flip) * f4;
    const double expected = 0.5 * loop * loop;
    const double freq = static_cast<double>(r.survivors_per_site[static_cast<std::size_t>(s)]) / shots;
    const double se = std::sqrt(expected * (1 - expected) / shots);
    EXPECT_NEAR(freq, expected, 3 * se + 1e-12) << "site " << s;
  }
}

TEST(Ensemble, ValidatesInputs) {
  const ApparatusConfig cfg;
  ShotConfig sc;
  EXPECT_THROW(run_ensemble(sc, 0, cfg), ConfigError);
  sc.p_a = 1.5;
  EXPECT_THROW(run_ensemble(sc, 1, cfg), ConfigError);
}

TEST(Ensemble, CorrectGroupCounting) {
  EnsembleResult r;
  r.target_sites = {10, 12, 30, 32};
  ShotRecord good, extra, missing;
  for (int s : {10, 12, 30, 32}) good.survivors.push_back({s});
  extra = good;
  extra.survivors.push_back({14});
  missing.survivors.push_back({10});
  r.shots = {good, extra, missing};
  const auto groups = target_groups(r, 4);
  ASSERT_EQ(groups.size(), 2u);
  // good: 2, extra: 1 (the 30/32 group), missing: 0
  EXPECT_EQ(count_correct_groups(r, groups, 3), 3);
  EXPECT_EQ(count_complete_patterns(r), 2);
}

TEST(Ensemble, CsvHeaders) {
  EnsembleResult r;
  r.survivors_per_site = {0, 3};
  ShotRecord s;
  s.survivors.push_back({1, 1e-9, 3e-9, 4e-9, AtomState::one});
  r.shots = {s};
  std::ostringstream a, b;
  write_atoms_csv(a, r);
  write_summary_csv(b, r);
  EXPECT_EQ(a.str(), "shot_index,site,axial_nm,radial_nm,state\n0,1,1,5,ONE\n");
  EXPECT_EQ(b.str(), "site,survival_count\n0,0\n1,3\n");
}
