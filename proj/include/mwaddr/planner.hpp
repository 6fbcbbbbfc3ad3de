#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "kvdoc.hpp"
#include "physics.hpp"
#include "pulse.hpp"

namespace mwaddr {

/// Lattice sites (relative to a reference site) that should end up occupied.
struct TargetPattern {
  std::vector<int> sites;

  void validate() const {
    if (sites.empty()) throw ConfigError("pattern must contain at least one site");
    for (std::size_t i = 1; i < sites.size(); ++i) {
      if (sites[i] <= sites[i - 1]) throw ConfigError("pattern sites must be strictly increasing");
    }
  }

  /// Parses a comma separated list such as "0,2,16,18".
  static TargetPattern parse(const std::string& text) {
    TargetPattern p;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const std::string t = kv::trim(item);
      if (t.empty()) continue;
      p.sites.push_back(static_cast<int>(kv::parse_number(t, "pattern")));
      if (static_cast<double>(p.sites.back()) != kv::parse_number(t, "pattern")) {
        throw ConfigError("pattern entries must be integers: '" + t + "'");
      }
    }
    p.validate();
    return p;
  }
};

/// Clusters pattern sites whose successive spacing is at most max_gap.
inline std::vector<std::vector<int>> group_pattern(const TargetPattern& pattern, int max_gap) {
  std::vector<std::vector<int>> groups;
  for (int s : pattern.sites) {
    if (groups.empty() || s - groups.back().back() > max_gap) groups.emplace_back();
    groups.back().push_back(s);
  }
  return groups;
}

/// Pulse-train center frequencies omega_i = omega'(I) lambda/2 site_i (rad/s).
inline std::vector<double> frequencies_for_pattern(const TargetPattern& pattern, double current,
                                                   const ApparatusConfig& cfg) {
  pattern.validate();
  if (!(current > 0.0)) throw ZeroGradient("pattern frequencies need a non-zero coil current");
  std::vector<double> out;
  out.reserve(pattern.sites.size());
  const double split = cfg.site_splitting(current);
  for (int s : pattern.sites) out.push_back(split * s);
  return out;
}

/// Every pairwise frequency difference is a positive integer number of site splittings.
inline bool is_commensurate(const std::vector<double>& frequencies, double current,
                            const ApparatusConfig& cfg, double rel_tol = 1e-6) {
  const double split = cfg.site_splitting(current);
  if (!(split > 0.0)) return false;
  for (std::size_t i = 0; i < frequencies.size(); ++i) {
    for (std::size_t j = i + 1; j < frequencies.size(); ++j) {
      const double ratio = std::abs(frequencies[i] - frequencies[j]) / split;
      const double n = std::round(ratio);
      if (n < 1.0 || std::abs(ratio - n) > rel_tol * std::max(n, 1.0)) return false;
    }
  }
  return true;
}

/// Train, loop count and push-out settings of one patterning sequence.
struct SequencePlan {
  std::vector<PulseDescriptor> train;
  int loop_count = 1;
  double current = 45.0;  // A
  double pushout_survival_f4 = 0.01;
  double pushout_survival_f3 = 0.99;
  double init_efficiency = 1.0;
  std::uint64_t seed = 0;
  /// Single-loop spectral model used for transfer; derived from the Bloch integrator when absent.
  std::optional<GaussianModel> spectral_model;

  std::vector<double> frequencies() const {
    std::vector<double> f;
    for (const auto& p : train) f.push_back(p.frequency_offset);
    return f;
  }

  void validate(const ApparatusConfig& cfg) const {
    if (loop_count < 1) throw ConfigError("loop_count must be >= 1");
    if (train.empty()) return;
    for (const auto& p : train) p.validate();
    const auto& first = train.front();
    for (const auto& p : train) {
      const bool same = p.shape == first.shape && p.duration == first.duration &&
                        p.sigma_t == first.sigma_t && p.truncation == first.truncation &&
                        p.peak_rabi == first.peak_rabi;
      if (!same) throw ConfigError("all pulses of a train must share shape parameters");
    }
    auto prob = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!prob(pushout_survival_f4) || !prob(pushout_survival_f3) || !prob(init_efficiency)) {
      throw ConfigError("plan probabilities must lie in [0,1]");
    }
    if (spectral_model && !(spectral_model->sigma_omega > 0.0 && prob(spectral_model->p_max))) {
      throw ConfigError("spectral model needs sigma_omega > 0 and p_max in [0,1]");
    }
    if (train.size() > 1 && !is_commensurate(frequencies(), current, cfg)) {
      throw ConfigError("pulse frequencies are not commensurate with the site splitting");
    }
  }
};

/// Selectivity prediction for M loops.
struct Selectivity {
  double p_max_single = 0.0;
  double sigma_omega_single = 0.0;  // rad/s
  double p_max = 0.0;               // P_max^M
  double sigma_omega = 0.0;         // sigma_omega / sqrt(M), rad/s
  double sigma_z = 0.0;             // sites
  int loops = 1;
};

inline Selectivity plan_selectivity(const GaussianModel& single, int loops, double current,
                                    const ApparatusConfig& cfg) {
  if (loops < 1) throw ConfigError("loop count must be >= 1");
  if (!(current > 0.0)) throw ZeroGradient("selectivity needs a non-zero coil current");
  const GaussianModel m = single.compose(loops);
  Selectivity s;
  s.p_max_single = single.p_max;
  s.sigma_omega_single = single.sigma_omega;
  s.p_max = m.p_max;
  s.sigma_omega = m.sigma_omega;
  s.sigma_z = m.sigma_omega / cfg.site_splitting(current);
  s.loops = loops;
  return s;
}

/// Single Gaussian pi-pulse model from the Bloch integrator with the apparatus T2:
/// P_max is the resonant transfer, sigma_omega the width of a Gaussian fit.
inline GaussianModel gaussian_pulse_model(double sigma_t, const ApparatusConfig& cfg,
                                          double truncation = 4.0, const BlochOptions& opts = {}) {
  const PulseDescriptor pulse = PulseDescriptor::gaussian_pi(sigma_t, truncation);
  const Spectrum spec = bloch_spectrum(pulse, cfg.t2, opts);
  return {bloch_integrate(pulse, 0.0, cfg.t2, opts), *spec.fitted_sigma};
}

inline Selectivity plan_selectivity(double sigma_t, int loops, double current,
                                    const ApparatusConfig& cfg) {
  if (!(sigma_t > 0.0)) throw ConfigError("sigma_t must be > 0");
  return plan_selectivity(gaussian_pulse_model(sigma_t, cfg), loops, current, cfg);
}

struct SearchDomain {
  std::vector<double> sigma_ts;  // s
  std::vector<int> loop_counts;
};

struct LoopChoice {
  double sigma_t = 0.0;
  int loops = 1;
  Selectivity selectivity;
};

/// Picks the (sigma_t, M) with the largest P_max(M) among candidates with
/// sigma_z(M) <= target_sigma_z and P_max(M) >= min_p. Ties go to smaller M, then smaller sigma_t.
template <class ModelFn>
LoopChoice optimize_loop_count(double target_sigma_z, double min_p, double current,
                               const ApparatusConfig& cfg, const SearchDomain& domain,
                               ModelFn&& model_for_sigma_t) {
  if (domain.sigma_ts.empty() || domain.loop_counts.empty()) {
    throw ConfigError("search domain must not be empty");
  }
  std::vector<double> sigma_ts = domain.sigma_ts;
  std::vector<int> loops = domain.loop_counts;
  std::sort(sigma_ts.begin(), sigma_ts.end());
  std::sort(loops.begin(), loops.end());

  std::optional<LoopChoice> best;
  for (double st : sigma_ts) {
    const GaussianModel single = model_for_sigma_t(st);
    for (int m : loops) {
      const Selectivity s = plan_selectivity(single, m, current, cfg);
      if (s.sigma_z > target_sigma_z || s.p_max < min_p) continue;
      // Iteration is ordered by (sigma_t, M); equal P_max keeps the earlier candidate
      // unless the later one has a smaller M.
      const bool better = !best || s.p_max > best->selectivity.p_max ||
                          (s.p_max == best->selectivity.p_max && m < best->loops);
      if (better) best = LoopChoice{st, m, s};
    }
  }
  if (!best) throw Infeasible("no (sigma_t, M) candidate meets the selectivity target");
  return *best;
}

inline LoopChoice optimize_loop_count(double target_sigma_z, double min_p, double current,
                                      const ApparatusConfig& cfg, const SearchDomain& domain) {
  return optimize_loop_count(target_sigma_z, min_p, current, cfg, domain,
                             [&](double st) { return gaussian_pulse_model(st, cfg); });
}

struct PlanResult {
  SequencePlan plan;
  std::vector<std::string> warnings;
};

/// Builds a pulse train addressing every pattern site, in ascending frequency order.
inline PlanResult make_plan(const TargetPattern& pattern, double current,
                            const PulseDescriptor& prototype, int loops,
                            const ApparatusConfig& cfg,
                            std::optional<GaussianModel> model = std::nullopt) {
  const auto freqs = frequencies_for_pattern(pattern, current, cfg);
  PlanResult out;
  out.plan.loop_count = loops;
  out.plan.current = current;
  out.plan.pushout_survival_f4 = cfg.pushout_survival_f4;
  out.plan.pushout_survival_f3 = cfg.pushout_survival_f3;
  out.plan.spectral_model = model;
  for (double f : freqs) {
    PulseDescriptor p = prototype;
    p.frequency_offset = f;
    out.plan.train.push_back(p);
  }
  std::sort(out.plan.train.begin(), out.plan.train.end(),
            [](const auto& a, const auto& b) { return a.frequency_offset < b.frequency_offset; });
  out.plan.validate(cfg);

  double sigma_single = 0.0;
  if (model) {
    sigma_single = model->sigma_omega;
  } else if (prototype.shape == PulseShape::gaussian) {
    sigma_single = gaussian_pulse_model(prototype.sigma_t, cfg, prototype.truncation).sigma_omega;
  } else {
    sigma_single = prototype.peak_rabi;
  }
  const double sigma_m = sigma_single / std::sqrt(static_cast<double>(loops));
  const double split = cfg.site_splitting(current);
  for (std::size_t i = 1; i < pattern.sites.size(); ++i) {
    const int spacing = pattern.sites[i] - pattern.sites[i - 1];
    if (spacing * split < 4.0 * sigma_m) {
      out.warnings.push_back("sites " + std::to_string(pattern.sites[i - 1]) + " and " +
                             std::to_string(pattern.sites[i]) +
                             " are closer than 4 sigma_omega(M); pulses may overlap spectrally");
    }
  }
  return out;
}

struct PatternProbability {
  double p_ini = 0.0;   // all target sites initially loaded
  double p_full = 0.0;  // all target sites loaded and kept
};

inline PatternProbability pattern_success_probability(int n_atoms, double p_a, double p_keep) {
  if (n_atoms < 1) throw ConfigError("pattern needs at least one atom");
  return {std::pow(p_a, n_atoms), std::pow(p_a * p_keep, n_atoms)};
}

struct MottPlaneYield {
  long atoms_in_plane = 0;           // unit-filled sites in the addressed plane
  double neighbor_plane_fraction = 0.0;
  long total_sites = 0;
  double retained_atoms = 0.0;       // expected number kept after M loops
  std::map<int, long> sites_per_plane;
};

/// Plane selection from a unit-filled spherical cloud on a cubic lattice of spacing lambda/2.
/// Plane k sits at detuning k * omega'(I) lambda/2 from the addressed plane k = 0.
inline MottPlaneYield mott_plane_yield(double cloud_diameter, const GaussianModel& single,
                                       int loops, double current, const ApparatusConfig& cfg) {
  if (loops < 1) throw ConfigError("loop count must be >= 1");
  const double a = cfg.site_spacing();
  const double r = cloud_diameter / 2.0;
  const long n = static_cast<long>(std::floor(r / a));
  const double r2 = (r / a) * (r / a);
  MottPlaneYield y;
  for (long k = -n; k <= n; ++k) {
    long count = 0;
    for (long i = -n; i <= n; ++i) {
      for (long j = -n; j <= n; ++j) {
        if (static_cast<double>(i * i + j * j + k * k) <= r2 + 1e-12) ++count;
      }
    }
    if (count > 0) y.sites_per_plane[static_cast<int>(k)] = count;
  }
  const GaussianModel m = single.compose(loops);
  const double split = cfg.site_splitting(current);
  double neighbor = 0.0;
  for (const auto& [k, count] : y.sites_per_plane) {
    y.total_sites += count;
    const double kept = static_cast<double>(count) * m(k * split);
    y.retained_atoms += kept;
    if (k != 0) neighbor += kept;
  }
  y.atoms_in_plane = y.sites_per_plane.count(0) ? y.sites_per_plane.at(0) : 0;
  y.neighbor_plane_fraction = y.retained_atoms > 0.0 ? neighbor / y.retained_atoms : 0.0;
  return y;
}

}  // namespace mwaddr
