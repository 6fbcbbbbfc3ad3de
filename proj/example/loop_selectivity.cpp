// Selectivity of repeated inner loops for a 20 us Gaussian pi-pulse at 45 A.

#include <cstdio>

#include <mwaddr/mwaddr.hpp>

int main() {
  using namespace mwaddr;
  const ApparatusConfig cfg;
  const GaussianModel single = gaussian_pulse_model(20e-6, cfg);
  std::printf("single pulse: P_max %.3f, sigma_omega/2pi %.2f kHz\n", single.p_max,
              units::cyclic(single.sigma_omega) / 1e3);
  std::printf("   M   P_max   sigma_z [sites]\n");
  for (int m = 1; m <= 5; ++m) {
    const Selectivity s = plan_selectivity(single, m, 45.0, cfg);
    std::printf("%4d  %6.3f  %6.3f\n", m, s.p_max, s.sigma_z);
  }
  const double drift_free = drift_deconvolve(0.60);
  std::printf("measured 0.60 sites with drift -> %.3f sites drift-free\n", drift_free);
  return 0;
}
