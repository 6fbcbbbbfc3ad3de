#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <boost/numeric/odeint.hpp>

#include "errors.hpp"
#include "gaussian_fit.hpp"
#include "units.hpp"

namespace mwaddr {

enum class PulseShape { rectangular, gaussian };

inline const char* to_string(PulseShape s) {
  return s == PulseShape::rectangular ? "rectangular" : "gaussian";
}

/// One microwave pulse in the rotating frame of its own carrier.
///
/// Rectangular pulses are described by duration and peak Rabi rate. Gaussian pulses
/// by sigma_t and a truncation half-width in units of sigma_t; their peak Rabi rate
/// is derived so that the truncated envelope integrates to `area`.
struct PulseDescriptor {
  PulseShape shape = PulseShape::gaussian;
  double duration = 0.0;        // s, rectangular only
  double sigma_t = 0.0;         // s, gaussian only
  double truncation = 4.0;      // gaussian half-width in sigma_t
  double frequency_offset = 0.0;  // rad/s relative to delta0 + Delta_HFS
  double peak_rabi = 0.0;       // rad/s
  double area = units::pi;      // rad

  static PulseDescriptor rectangular(double duration, double peak_rabi, double offset = 0.0) {
    PulseDescriptor p;
    p.shape = PulseShape::rectangular;
    p.duration = duration;
    p.peak_rabi = peak_rabi;
    p.area = peak_rabi * duration;
    p.frequency_offset = offset;
    return p;
  }

  /// Resonant pi-pulse of the given Rabi rate.
  static PulseDescriptor rectangular_pi(double peak_rabi, double offset = 0.0) {
    return rectangular(units::pi / peak_rabi, peak_rabi, offset);
  }

  static PulseDescriptor gaussian(double sigma_t, double area = units::pi, double truncation = 4.0,
                                  double offset = 0.0) {
    PulseDescriptor p;
    p.shape = PulseShape::gaussian;
    p.sigma_t = sigma_t;
    p.truncation = truncation;
    p.area = area;
    p.frequency_offset = offset;
    p.peak_rabi = area / (sigma_t * std::sqrt(2.0 * units::pi) *
                          std::erf(truncation / std::sqrt(2.0)));
    return p;
  }

  static PulseDescriptor gaussian_pi(double sigma_t, double truncation = 4.0, double offset = 0.0) {
    return gaussian(sigma_t, units::pi, truncation, offset);
  }

  double start_time() const {
    return shape == PulseShape::rectangular ? 0.0 : -truncation * sigma_t;
  }
  double end_time() const {
    return shape == PulseShape::rectangular ? duration : truncation * sigma_t;
  }
  double total_length() const { return end_time() - start_time(); }

  /// Rabi rate envelope at time t (zero outside the pulse window).
  double rabi(double t) const {
    if (t < start_time() || t > end_time()) return 0.0;
    if (shape == PulseShape::rectangular) return peak_rabi;
    const double u = t / sigma_t;
    return peak_rabi * std::exp(-0.5 * u * u);
  }

  /// Closed-form time integral of the envelope.
  double integrated_area() const {
    if (shape == PulseShape::rectangular) return peak_rabi * duration;
    return peak_rabi * sigma_t * std::sqrt(2.0 * units::pi) * std::erf(truncation / std::sqrt(2.0));
  }

  void validate() const {
    if (shape == PulseShape::rectangular && !(duration > 0.0)) {
      throw ConfigError("pulse duration must be > 0");
    }
    if (shape == PulseShape::gaussian && !(sigma_t > 0.0 && truncation > 0.0)) {
      throw ConfigError("gaussian pulse needs sigma_t > 0 and truncation > 0");
    }
    if (!(peak_rabi > 0.0)) throw ConfigError("pulse peak_rabi must be > 0");
  }
};

/// Transfer probability of a rectangular pulse, the two-level Rabi formula.
inline double rect_transfer(double detuning, double rabi, double duration) {
  const double w2 = rabi * rabi + detuning * detuning;
  if (w2 == 0.0) return 0.0;
  const double s = std::sin(std::sqrt(w2) * duration / 2.0);
  return rabi * rabi / w2 * s * s;
}

/// Gaussian transfer profile with 1/sqrt(e) half-width sigma_omega.
inline double gaussian_spectrum(double detuning, double sigma_omega, double p_max) {
  const double u = detuning / sigma_omega;
  return p_max * std::exp(-0.5 * u * u);
}

/// Perturbative small-area estimate sigma_omega ~ 1 / (sqrt(2) sigma_t). An approximation only;
/// the pi-pulse width is obtained by fitting an integrated spectrum.
inline double perturbative_sigma_omega(double sigma_t) { return 1.0 / (std::sqrt(2.0) * sigma_t); }

struct BlochOptions {
  double relative_tolerance = 1e-8;
  double absolute_tolerance = 1e-10;
  long max_steps = 2'000'000;
};

struct BlochResult {
  double excited_population = 0.0;  // |1> population at the end of the pulse
  double max_norm_defect = 0.0;     // max | |bloch vector| - 1 | over accepted steps
  long steps = 0;
};

/// Integrates the optical Bloch equations for one pulse starting in |0>.
///
/// State (u, v, w) with w = P1 - P0. Transverse components decay at 1/T2; pass
/// T2 = infinity for unitary evolution, where the Bloch vector length stays 1.
inline BlochResult bloch_evolve(const PulseDescriptor& pulse, double detuning, double t2,
                                const BlochOptions& opts = {}) {
  namespace ode = boost::numeric::odeint;
  using State = std::array<double, 3>;
  pulse.validate();

  const double gamma2 = std::isfinite(t2) ? 1.0 / t2 : 0.0;
  auto rhs = [&](const State& s, State& ds, double t) {
    const double rabi = pulse.rabi(t);
    ds[0] = -detuning * s[1] - gamma2 * s[0];
    ds[1] = detuning * s[0] - rabi * s[2] - gamma2 * s[1];
    ds[2] = rabi * s[1];
  };

  auto stepper = ode::make_controlled<ode::runge_kutta_dopri5<State>>(opts.absolute_tolerance,
                                                                       opts.relative_tolerance);
  State state{0.0, 0.0, -1.0};
  double t = pulse.start_time();
  const double t_end = pulse.end_time();
  const double fastest = std::max({std::abs(detuning), pulse.peak_rabi, gamma2, 1.0});
  double dt = std::min(0.05 / fastest, (t_end - t) / 16.0);
  BlochResult result;
  long rejected = 0;
  while (t < t_end) {
    if (t + dt > t_end) dt = t_end - t;
    const auto outcome = stepper.try_step(rhs, state, t, dt);
    if (outcome == ode::success) {
      ++result.steps;
      if (gamma2 == 0.0) {
        const double len = std::sqrt(state[0] * state[0] + state[1] * state[1] + state[2] * state[2]);
        result.max_norm_defect = std::max(result.max_norm_defect, std::abs(len - 1.0));
      }
    } else {
      ++rejected;
    }
    if (result.steps + rejected > opts.max_steps || dt < 1e-18 * (t_end - pulse.start_time())) {
      throw IntegrationFailure("Bloch integration could not meet tolerance");
    }
  }
  result.excited_population = std::clamp((1.0 + state[2]) / 2.0, 0.0, 1.0);
  return result;
}

inline double bloch_integrate(const PulseDescriptor& pulse, double detuning, double t2,
                              const BlochOptions& opts = {}) {
  return bloch_evolve(pulse, detuning, t2, opts).excited_population;
}

struct SpectrumSample {
  double detuning;  // rad/s
  double transfer;  // probability
};

/// Sampled transfer-vs-detuning curve with its Gaussian fit.
struct Spectrum {
  std::vector<SpectrumSample> samples;
  std::optional<double> fitted_p_max;
  std::optional<double> fitted_sigma;   // rad/s
  std::optional<double> fitted_center;  // rad/s

  std::vector<double> detunings() const {
    std::vector<double> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.detuning);
    return out;
  }
  std::vector<double> transfers() const {
    std::vector<double> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.transfer);
    return out;
  }

  /// Probabilities in [0,1] and strictly increasing detunings.
  bool valid() const {
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (!(samples[i].transfer >= 0.0 && samples[i].transfer <= 1.0)) return false;
      if (i > 0 && !(samples[i].detuning > samples[i - 1].detuning)) return false;
    }
    return true;
  }

  /// Fits a Gaussian and stores P_max and sigma_omega.
  Spectrum& fit() {
    const auto x = detunings();
    const auto y = transfers();
    const GaussianFit g = fit_gaussian(x, y);
    fitted_p_max = g.amplitude;
    fitted_sigma = g.sigma;
    fitted_center = g.center;
    return *this;
  }
};

/// Uniform grid spanning +/- span_sigmas * sigma with at least points_per_sigma per sigma.
inline std::vector<double> detuning_grid(double sigma, double span_sigmas = 6.0,
                                         int points_per_sigma = 25) {
  const long half = static_cast<long>(std::ceil(span_sigmas * points_per_sigma));
  std::vector<double> grid;
  grid.reserve(static_cast<std::size_t>(2 * half + 1));
  for (long i = -half; i <= half; ++i) {
    grid.push_back(sigma * static_cast<double>(i) / points_per_sigma);
  }
  return grid;
}

/// Samples a transfer function on the given detunings and fits it.
template <class TransferFn>
Spectrum sample_spectrum(const std::vector<double>& grid, TransferFn&& transfer) {
  Spectrum s;
  s.samples.reserve(grid.size());
  for (double d : grid) s.samples.push_back({d, std::clamp(transfer(d), 0.0, 1.0)});
  s.fit();
  return s;
}

/// Spectrum of a pulse from the Bloch integrator. The grid follows the perturbative
/// width estimate for Gaussian pulses and the Rabi rate for rectangular ones.
inline Spectrum bloch_spectrum(const PulseDescriptor& pulse, double t2,
                               const BlochOptions& opts = {}) {
  const double scale = pulse.shape == PulseShape::gaussian
                           ? perturbative_sigma_omega(pulse.sigma_t)
                           : pulse.peak_rabi;
  return sample_spectrum(detuning_grid(scale), [&](double d) {
    return bloch_integrate(pulse, d, t2, opts);
  });
}

/// M-fold inner-loop composition: the pointwise M-th power of a single-loop spectrum.
inline Spectrum compose_loops(const Spectrum& single, int loops) {
  if (loops < 1) throw ConfigError("loop count must be >= 1");
  Spectrum out;
  out.samples.reserve(single.samples.size());
  for (const auto& s : single.samples) {
    out.samples.push_back({s.detuning, std::pow(s.transfer, loops)});
  }
  out.fit();
  return out;
}

/// Analytic Gaussian single-loop model and its M-loop composition.
struct GaussianModel {
  double p_max = 1.0;
  double sigma_omega = 0.0;  // rad/s

  double operator()(double detuning) const { return gaussian_spectrum(detuning, sigma_omega, p_max); }

  GaussianModel compose(int loops) const {
    return {std::pow(p_max, loops), sigma_omega / std::sqrt(static_cast<double>(loops))};
  }
};

/// CSV with header `detuning_hz,transfer`.
inline void write_spectrum_csv(std::ostream& os, const Spectrum& s) {
  os << "detuning_hz,transfer\n";
  char line[96];
  for (const auto& smp : s.samples) {
    std::snprintf(line, sizeof line, "%.15g,%.15g\n", units::cyclic(smp.detuning), smp.transfer);
    os << line;
  }
}

}  // namespace mwaddr
