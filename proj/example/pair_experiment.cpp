// Three pairs of atoms two sites apart, 16 sites between pairs, two inner loops,
// 64 um radial offset and 10 nm/s lattice drift. Prints the pair-distance histogram.

#include <cstdio>

#include <mwaddr/mwaddr.hpp>

int main() {
  using namespace mwaddr;
  ApparatusConfig cfg;
  cfg.radial_offset = 64e-6;

  const TargetPattern pattern = TargetPattern::parse("0,2,16,18,32,34");
  const GaussianModel single{0.843, units::angular(6.4e3)};
  const PlanResult plan = make_plan(pattern, 45.0, PulseDescriptor::gaussian_pi(20e-6), 2, cfg, single);

  ShotConfig shots;
  shots.plan = plan.plan;
  shots.seed = 7;
  const EnsembleResult ens = run_ensemble(shots, 500, cfg);
  const ImagedEnsemble images = image_ensemble(ens, shots, cfg, ImagingConfig{});
  const PairAnalysis pairs = analyze_pairs(ens, images, cfg);

  std::printf("correctly prepared pairs: %ld\n", pairs.correct_groups);
  std::printf("paired shots: %ld, skipped: %ld\n", pairs.histogram.paired, pairs.histogram.skipped);
  for (std::size_t k = 0; k < pairs.histogram.counts.size(); ++k) {
    std::printf("  %4.1f sites  %ld\n", pairs.histogram.center(k), pairs.histogram.counts[k]);
  }
  if (pairs.selectivity) {
    std::printf("centre %.3f sites, sigma_meas %.3f sites\n", pairs.selectivity->center,
                pairs.selectivity->sigma_meas);
  }
  return 0;
}
