#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <random>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "errors.hpp"
#include "physics.hpp"
#include "planner.hpp"
#include "pulse.hpp"
#include "rng.hpp"

namespace mwaddr {

enum class AtomState { zero, one, lost };

inline const char* to_string(AtomState s) {
  switch (s) {
    case AtomState::zero: return "ZERO";
    case AtomState::one: return "ONE";
    case AtomState::lost: return "LOST";
  }
  return "?";
}

/// One trapped atom. Displacements are relative to the centre of its lattice well.
struct AtomRecord {
  int site = 0;                  // absolute lattice index, 0 .. extent-1
  double axial = 0.0;            // m
  double radial_x = 0.0;         // m, along the radial-offset direction
  double radial_y = 0.0;         // m
  AtomState state = AtomState::zero;

  double radial() const { return std::hypot(radial_x, radial_y); }
};

/// How thermal displacements evolve during a sequence.
enum class ThermalMode {
  resampled,  ///< drawn afresh for every inner loop
  frozen,     ///< drawn once at loading and kept for the whole shot
  off,        ///< atoms sit at the well centres
};

inline const char* to_string(ThermalMode m) {
  switch (m) {
    case ThermalMode::resampled: return "resampled";
    case ThermalMode::frozen: return "frozen";
    case ThermalMode::off: return "off";
  }
  return "?";
}

struct ShotConfig {
  long lattice_extent = 200;
  double p_a = 0.5;
  double drift_rate = 10e-9;   // m/s
  double shot_interval = 10.0; // s
  long reference_site = -1;    // site addressed by zero frequency offset; < 0 centres the plan
  std::uint64_t seed = 0;
  ThermalMode thermal = ThermalMode::resampled;
  SequencePlan plan;

  void validate() const {
    if (lattice_extent < 1) throw ConfigError("lattice_extent must be >= 1");
    if (!(p_a >= 0.0 && p_a <= 1.0)) throw ConfigError("p_a must be in [0,1]");
    if (!(shot_interval >= 0.0)) throw ConfigError("shot_interval must be >= 0");
  }
};

struct ThermalDisplacement {
  double axial = 0.0;
  double x = 0.0;
  double y = 0.0;
};

/// Zero-mean Gaussian displacements with the thermal widths of the lattice wells.
inline ThermalDisplacement sample_thermal_displacement(const ApparatusConfig& cfg, Rng& rng) {
  const ThermalWidths w = thermal_widths(cfg);
  std::normal_distribution<double> unit(0.0, 1.0);
  ThermalDisplacement d;
  d.axial = w.axial * unit(rng);
  d.x = w.radial * unit(rng);
  d.y = w.radial * unit(rng);
  return d;
}

inline void assign_displacement(AtomRecord& a, const ThermalDisplacement& d) {
  a.axial = d.axial;
  a.radial_x = d.x;
  a.radial_y = d.y;
}

/// Bernoulli loading: each site holds one atom with probability p_a, never two.
inline std::vector<AtomRecord> load_lattice(long extent, double p_a, const ApparatusConfig& cfg,
                                            ThermalMode thermal, Rng& rng) {
  std::bernoulli_distribution occupied(std::clamp(p_a, 0.0, 1.0));
  std::vector<AtomRecord> atoms;
  for (long s = 0; s < extent; ++s) {
    if (!occupied(rng)) continue;
    AtomRecord a;
    a.site = static_cast<int>(s);
    if (thermal != ThermalMode::off) assign_displacement(a, sample_thermal_displacement(cfg, rng));
    atoms.push_back(a);
  }
  return atoms;
}

/// Single-pulse transfer probability as a function of detuning.
class TransferFunction {
public:
  struct Rect {
    double rabi;
    double duration;
  };

  TransferFunction() = default;
  explicit TransferFunction(GaussianModel g) : model_(g) {}
  explicit TransferFunction(Rect r) : model_(r) {}

  /// Uses the plan's spectral model when present; otherwise the analytic Rabi formula for
  /// rectangular pulses or the Bloch-fitted model for Gaussian ones.
  static TransferFunction from_plan(const SequencePlan& plan, const ApparatusConfig& cfg) {
    if (plan.spectral_model) return TransferFunction(*plan.spectral_model);
    if (plan.train.empty()) return TransferFunction(GaussianModel{0.0, 1.0});
    const PulseDescriptor& p = plan.train.front();
    if (p.shape == PulseShape::rectangular) return TransferFunction(Rect{p.peak_rabi, p.duration});
    return TransferFunction(gaussian_pulse_model(p.sigma_t, cfg, p.truncation));
  }

  double operator()(double detuning) const {
    if (const auto* g = std::get_if<GaussianModel>(&model_)) return (*g)(detuning);
    const auto& r = std::get<Rect>(model_);
    return rect_transfer(detuning, r.rabi, r.duration);
  }

private:
  std::variant<GaussianModel, Rect> model_ = GaussianModel{};
};

/// Everything the inner loop needs besides the atoms themselves.
struct LoopContext {
  const SequencePlan* plan = nullptr;
  const ApparatusConfig* cfg = nullptr;
  TransferFunction transfer;
  long reference_site = 0;
  double drift_offset = 0.0;  // m
  ThermalMode thermal = ThermalMode::resampled;
  std::vector<double> pulse_targets;  // m, axial position addressed by each pulse

  LoopContext(const SequencePlan& p, const ApparatusConfig& c, TransferFunction t, long ref,
              double drift, ThermalMode mode)
      : plan(&p), cfg(&c), transfer(t), reference_site(ref), drift_offset(drift), thermal(mode) {
    const double wp = c.omega_prime(p.current);
    for (const auto& pulse : p.train) {
      pulse_targets.push_back(wp > 0.0 ? pulse.frequency_offset / wp : 0.0);
    }
  }

  /// Detuning of an atom from pulse i.
  double detuning(const AtomRecord& a, std::size_t pulse) const {
    const double z = static_cast<double>(a.site - reference_site) * cfg->site_spacing() + a.axial +
                     drift_offset;
    const double target = pulse_targets[pulse];
    const Position r_prime{a.radial_x, a.radial_y, z - target};
    const Position r0{cfg->radial_offset, 0.0, cfg->axial_offset + target};
    return mwaddr::detuning(r_prime, r0, plan->current, *cfg, ValidityPolicy::ignore);
  }
};

/// One inner loop: optical pumping to |0>, the pulse train, then the push-out.
inline void run_single_loop(std::vector<AtomRecord>& atoms, const LoopContext& ctx, Rng& rng) {
  const SequencePlan& plan = *ctx.plan;
  std::bernoulli_distribution pumped(plan.init_efficiency);
  for (auto& a : atoms) {
    if (a.state == AtomState::lost) continue;
    a.state = pumped(rng) ? AtomState::zero : AtomState::one;
    if (ctx.thermal == ThermalMode::resampled) {
      assign_displacement(a, sample_thermal_displacement(*ctx.cfg, rng));
    }
  }
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  for (std::size_t i = 0; i < plan.train.size(); ++i) {
    for (auto& a : atoms) {
      if (a.state == AtomState::lost) continue;
      const double p = ctx.transfer(ctx.detuning(a, i));
      if (a.state == AtomState::zero && uniform(rng) < p) a.state = AtomState::one;
    }
  }
  for (auto& a : atoms) {
    if (a.state == AtomState::lost) continue;
    const double keep = a.state == AtomState::one ? plan.pushout_survival_f3 : plan.pushout_survival_f4;
    if (!(uniform(rng) < keep)) a.state = AtomState::lost;
  }
}

/// Applies the inner loop plan.loop_count times.
inline void apply_inner_loop(std::vector<AtomRecord>& atoms, const LoopContext& ctx, Rng& rng) {
  for (int m = 0; m < ctx.plan->loop_count; ++m) run_single_loop(atoms, ctx, rng);
}

/// Lattice drift after `shot` shots, folded into (-lambda/4, +lambda/4].
inline double drift_offset_for_shot(double drift_rate, double shot_interval, long shot,
                                    double site_spacing) {
  const double d = drift_rate * shot_interval * static_cast<double>(shot);
  double r = d - site_spacing * std::ceil(d / site_spacing - 0.5);
  if (r <= -site_spacing / 2.0) r += site_spacing;
  if (r > site_spacing / 2.0) r -= site_spacing;
  return r;
}

struct ShotRecord {
  long index = 0;
  double drift_offset = 0.0;
  long loaded = 0;
  std::vector<int> loaded_sites;
  std::vector<AtomRecord> survivors;
};

struct EnsembleResult {
  std::vector<ShotRecord> shots;
  std::vector<long> survivors_per_site;
  std::vector<int> target_sites;  // absolute indices addressed by the train
  long reference_site = 0;
  std::vector<std::string> warnings;
};

/// Reference site used when the config leaves it unset: the plan is centred in the lattice.
inline long resolve_reference_site(const ShotConfig& config, const ApparatusConfig& cfg) {
  if (config.reference_site >= 0) return config.reference_site;
  const SequencePlan& plan = config.plan;
  if (plan.train.empty()) return config.lattice_extent / 2;
  const double split = cfg.site_splitting(plan.current);
  double lo = 1e300, hi = -1e300;
  for (const auto& p : plan.train) {
    const double s = p.frequency_offset / split;
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  return config.lattice_extent / 2 - static_cast<long>(std::lround((lo + hi) / 2.0));
}

/// Simulates one shot with its own random stream.
inline ShotRecord simulate_shot(const ShotConfig& config, const ApparatusConfig& cfg,
                                const TransferFunction& transfer, long reference, long shot) {
  Rng rng = stream_rng(config.seed, static_cast<std::uint64_t>(shot), Stream::simulation);
  ShotRecord rec;
  rec.index = shot;
  rec.drift_offset = drift_offset_for_shot(config.drift_rate, config.shot_interval, shot,
                                           cfg.site_spacing());
  std::vector<AtomRecord> atoms = load_lattice(config.lattice_extent, config.p_a, cfg,
                                               config.thermal, rng);
  rec.loaded = static_cast<long>(atoms.size());
  for (const auto& a : atoms) rec.loaded_sites.push_back(a.site);
  const LoopContext ctx(config.plan, cfg, transfer, reference, rec.drift_offset, config.thermal);
  apply_inner_loop(atoms, ctx, rng);
  for (const auto& a : atoms) {
    if (a.state != AtomState::lost) rec.survivors.push_back(a);
  }
  return rec;
}

/// Runs n_shots independent shots on `workers` threads. Shot k always uses the stream
/// derived from (seed, k), so results do not depend on the worker count.
inline EnsembleResult run_ensemble(const ShotConfig& config, long n_shots,
                                   const ApparatusConfig& cfg, unsigned workers = 1) {
  if (n_shots < 1) throw ConfigError("n_shots must be >= 1");
  config.validate();
  cfg.validate();
  config.plan.validate(cfg);

  EnsembleResult result;
  result.reference_site = resolve_reference_site(config, cfg);
  const double split = cfg.site_splitting(config.plan.current);
  for (const auto& p : config.plan.train) {
    result.target_sites.push_back(static_cast<int>(result.reference_site +
                                                   std::lround(p.frequency_offset / split)));
  }
  // The expansion must hold across the lattice at the largest radial excursion (5 sigma).
  const double rho_max = cfg.radial_offset + 5.0 * thermal_widths(cfg).radial;
  for (long edge : {0L, config.lattice_extent - 1}) {
    const double z = cfg.axial_offset +
                     static_cast<double>(edge - result.reference_site) * cfg.site_spacing();
    if (!expansion_valid({rho_max, 0.0, z}, config.plan.current, cfg)) {
      result.warnings.push_back("second-order field expansion is not valid at the lattice edge");
      break;
    }
  }

  const TransferFunction transfer = TransferFunction::from_plan(config.plan, cfg);
  result.shots.resize(static_cast<std::size_t>(n_shots));
  const unsigned n_workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(n_shots)));
  auto work = [&](unsigned w) {
    for (long k = w; k < n_shots; k += n_workers) {
      result.shots[static_cast<std::size_t>(k)] =
          simulate_shot(config, cfg, transfer, result.reference_site, k);
    }
  };
  if (n_workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < n_workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }

  result.survivors_per_site.assign(static_cast<std::size_t>(config.lattice_extent), 0);
  for (const auto& shot : result.shots) {
    for (const auto& a : shot.survivors) ++result.survivors_per_site[static_cast<std::size_t>(a.site)];
  }
  return result;
}

/// Shots in which every target site holds a surviving atom (other survivors ignored).
inline long count_complete_patterns(const EnsembleResult& r) {
  long n = 0;
  for (const auto& shot : r.shots) {
    bool all = true;
    for (int t : r.target_sites) {
      const bool found = std::any_of(shot.survivors.begin(), shot.survivors.end(),
                                     [&](const AtomRecord& a) { return a.site == t; });
      if (!found) {
        all = false;
        break;
      }
    }
    n += all ? 1 : 0;
  }
  return n;
}

/// Correctly prepared groups: all sites of the group survived and no other atom survived
/// within `window` sites of the group.
inline long count_correct_groups(const EnsembleResult& r, const std::vector<std::vector<int>>& groups,
                                 int window) {
  long n = 0;
  for (const auto& shot : r.shots) {
    for (const auto& g : groups) {
      const int lo = g.front() - window;
      const int hi = g.back() + window;
      long inside = 0;
      bool all = true;
      for (const auto& a : shot.survivors) {
        if (a.site >= lo && a.site <= hi) ++inside;
      }
      for (int s : g) {
        all = all && std::any_of(shot.survivors.begin(), shot.survivors.end(),
                                 [&](const AtomRecord& a) { return a.site == s; });
      }
      if (all && inside == static_cast<long>(g.size())) ++n;
    }
  }
  return n;
}

/// Groups of absolute target sites, clustered by spacing.
inline std::vector<std::vector<int>> target_groups(const EnsembleResult& r, int max_gap) {
  TargetPattern p{r.target_sites};
  std::sort(p.sites.begin(), p.sites.end());
  p.sites.erase(std::unique(p.sites.begin(), p.sites.end()), p.sites.end());
  return group_pattern(p, max_gap);
}

/// `shot_index,site,axial_nm,radial_nm,state` for every surviving atom; axial and radial
/// are the thermal displacements from the well centre.
inline void write_atoms_csv(std::ostream& os, const EnsembleResult& r) {
  os << "shot_index,site,axial_nm,radial_nm,state\n";
  char line[160];
  for (const auto& shot : r.shots) {
    for (const auto& a : shot.survivors) {
      std::snprintf(line, sizeof line, "%ld,%d,%.15g,%.15g,%s\n", shot.index, a.site, a.axial / units::nm,
                    a.radial() / units::nm, to_string(a.state));
      os << line;
    }
  }
}

/// `site,survival_count`.
inline void write_summary_csv(std::ostream& os, const EnsembleResult& r) {
  os << "site,survival_count\n";
  for (std::size_t s = 0; s < r.survivors_per_site.size(); ++s) {
    os << s << ',' << r.survivors_per_site[s] << '\n';
  }
}

}  // namespace mwaddr
