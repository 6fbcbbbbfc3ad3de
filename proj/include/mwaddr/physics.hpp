#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "errors.hpp"
#include "units.hpp"

namespace mwaddr {

/// How the gyromagnetic ratio of the |F=4,m=4> <-> |F=3,m=3> transition is obtained.
enum class GyromagneticModel {
  rounded,   ///< 2pi x 2.5 MHz/G
  exact_cs,  ///< (3 g_3 - 4 g_4) mu_B / hbar from tabulated Cs ground-state g-factors
};

namespace cs133 {
// Steck, "Cesium D Line Data".
inline constexpr double g_j = 2.00254032;
inline constexpr double g_i = -0.00039885395;
inline constexpr double nuclear_spin = 3.5;

constexpr double hyperfine_g_factor(double f) {
  const double j = 0.5;
  const double ff = f * (f + 1.0);
  const double ii = nuclear_spin * (nuclear_spin + 1.0);
  const double jj = j * (j + 1.0);
  return g_j * (ff - ii + jj) / (2.0 * ff) + g_i * (ff + ii - jj) / (2.0 * ff);
}
}  // namespace cs133

/// Cartesian position relative to the quadrupole zero; z is the lattice axis.
struct Position {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  double radius() const { return std::hypot(x, y); }

  static Position axial(double z) { return {0.0, 0.0, z}; }

  friend Position operator+(const Position& a, const Position& b) {
    return {a.x + b.x, a.y + b.y, a.z + b.z};
  }
};

/// Magnetic field in gauss.
struct FieldVector {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  double magnitude() const { return std::sqrt(x * x + y * y + z * z); }
};

/// Static apparatus parameters. Defaults reproduce the published setup.
struct ApparatusConfig {
  double lattice_wavelength = 866e-9;                    // m
  double guiding_field = 3.0;                            // G
  double gradient_slope = 671e6;                         // Hz / (m A), i.e. 671 Hz/(um A)
  GyromagneticModel gyromagnetic = GyromagneticModel::rounded;
  double coil_current = 45.0;                            // A
  double radial_offset = 0.0;                            // m, lattice axis to coil axis
  double axial_offset = 0.0;                             // m, reference site to quadrupole zero
  double trap_freq_axial = units::angular(115e3);        // rad/s
  double trap_freq_radial = units::angular(1.2e3);       // rad/s
  double temperature = 10e-6;                            // K
  double mean_occupation_axial = 1.2;
  double mean_occupation_radial = 200.0;
  double rabi_peak = units::angular(60e3);               // rad/s
  double t2 = 200e-6;                                    // s
  double pushout_survival_f4 = 0.01;
  double pushout_survival_f3 = 0.99;
  double atom_mass = units::cs133_mass;                  // kg
  double validity_factor = 10.0;

  double site_spacing() const { return lattice_wavelength / 2.0; }

  /// Signed gyromagnetic ratio in rad/(s G).
  double gamma() const {
    if (gyromagnetic == GyromagneticModel::rounded) return units::angular(2.5e6);
    const double g3 = cs133::hyperfine_g_factor(3.0);
    const double g4 = cs133::hyperfine_g_factor(4.0);
    return units::angular((3.0 * g3 - 4.0 * g4) * units::bohr_magneton_hz_per_gauss);
  }

  /// Guiding-field Zeeman shift delta0 = gamma B0 (rad/s).
  double delta0() const { return gamma() * guiding_field; }

  /// Position-dependent shift omega'(I) in rad/(s m). Stored positive.
  double omega_prime(double current) const { return units::two_pi * gradient_slope * current; }

  /// Axial field gradient B'(I) in G/m; carries the sign of gamma.
  double field_gradient(double current) const { return omega_prime(current) / gamma(); }

  /// Coefficient of rho^2 in the transition frequency, omega'^2 / (8 delta0).
  double radial_curvature(double current) const {
    const double w = omega_prime(current);
    return w * w / (8.0 * delta0());
  }

  /// Splitting between neighbouring sites, rad/s.
  double site_splitting(double current) const { return omega_prime(current) * site_spacing(); }

  void validate() const {
    auto require = [](bool ok, const char* what) {
      if (!ok) throw ConfigError(std::string("invalid apparatus configuration: ") + what);
    };
    auto probability = [](double p) { return p >= 0.0 && p <= 1.0; };
    require(lattice_wavelength > 0.0, "lattice_wavelength must be > 0");
    require(guiding_field > 0.0, "guiding_field must be > 0");
    require(gradient_slope > 0.0, "gradient_slope must be > 0");
    require(coil_current >= 0.0, "coil_current must be >= 0");
    require(radial_offset >= 0.0, "radial_offset must be >= 0");
    require(trap_freq_axial > 0.0 && trap_freq_radial > 0.0, "trap frequencies must be > 0");
    require(temperature >= 0.0, "temperature must be >= 0");
    require(mean_occupation_axial >= 0.0 && mean_occupation_radial >= 0.0,
            "mean occupations must be >= 0");
    require(rabi_peak > 0.0, "rabi_peak must be > 0");
    require(t2 > 0.0, "t2 must be > 0");
    require(probability(pushout_survival_f4), "pushout_survival_f4 must be in [0,1]");
    require(probability(pushout_survival_f3), "pushout_survival_f3 must be in [0,1]");
    require(atom_mass > 0.0, "atom_mass must be > 0");
    require(validity_factor > 0.0, "validity_factor must be > 0");
  }
};

/// Whether a breach of the second-order expansion condition throws or is ignored.
enum class ValidityPolicy { enforce, ignore };

/// True when (B0 + B'z)^2 exceeds factor * B'^2 rho^2 / 4 at r.
inline bool expansion_valid(const Position& r, double current, const ApparatusConfig& cfg) {
  const double gradient = cfg.field_gradient(current);
  const double axial = cfg.guiding_field + gradient * r.z;
  const double rho = r.radius();
  return axial * axial > cfg.validity_factor * gradient * gradient * rho * rho / 4.0;
}

/// Ideal quadrupole plus guiding field, in gauss.
inline FieldVector magnetic_field(const Position& r, double current, const ApparatusConfig& cfg) {
  const double gradient = cfg.field_gradient(current);
  return {-gradient * r.x / 2.0, -gradient * r.y / 2.0, cfg.guiding_field + gradient * r.z};
}

/// Transition frequency offset from the hyperfine splitting (rad/s), second order in rho.
inline double transition_frequency(const Position& r, double current, const ApparatusConfig& cfg,
                                   ValidityPolicy policy = ValidityPolicy::enforce) {
  if (policy == ValidityPolicy::enforce && !expansion_valid(r, current, cfg)) {
    throw ValidityViolation("field expansion invalid at rho = " + std::to_string(r.radius()) +
                            " m, z = " + std::to_string(r.z) + " m");
  }
  const double rho2 = r.x * r.x + r.y * r.y;
  return cfg.delta0() + cfg.omega_prime(current) * r.z + cfg.radial_curvature(current) * rho2;
}

/// Exact gamma |B| without the expansion; used as a cross-check of transition_frequency.
inline double transition_frequency_exact(const Position& r, double current,
                                         const ApparatusConfig& cfg) {
  const FieldVector b = magnetic_field(r, current, cfg);
  return cfg.gamma() * b.magnitude();
}

/// Detuning of a displaced atom at r0 + r_prime relative to the resonance at r0 (rad/s).
///
/// Evaluated in difference form so the large delta0 term cancels exactly; for a zero
/// radial offset and no radial displacement the result is exactly omega'(I) z'.
inline double detuning(const Position& r_prime, const Position& r0, double current,
                       const ApparatusConfig& cfg,
                       ValidityPolicy policy = ValidityPolicy::enforce) {
  if (policy == ValidityPolicy::enforce) {
    if (!expansion_valid(r_prime + r0, current, cfg) || !expansion_valid(r0, current, cfg)) {
      throw ValidityViolation("field expansion invalid for detuning evaluation");
    }
  }
  const double x = r_prime.x + r0.x;
  const double y = r_prime.y + r0.y;
  const double radial = (x * x + y * y) - (r0.x * r0.x + r0.y * r0.y);
  return cfg.omega_prime(current) * r_prime.z + cfg.radial_curvature(current) * radial;
}

/// Gradient calibration expressed in the units used on the bench.
struct GradientCalibration {
  double current;                      // A
  double hz_per_site_per_amp;          // omega'/(2 pi I) per lattice site
  double hz_per_um_per_amp;            // omega'/(2 pi I) per micrometre
  double microgauss_per_um_per_amp;    // B'/I
  double site_splitting_hz;            // omega'(I) lambda/2 / 2 pi
  double gradient_gauss_per_cm;        // |B'(I)|
  double delta0_hz;                    // gamma B0 / 2 pi
  double radial_curvature_hz_per_um2;  // omega'^2 / (8 delta0) / 2 pi
};

inline GradientCalibration calibrate_gradient(const ApparatusConfig& cfg, double current) {
  GradientCalibration cal{};
  cal.current = current;
  cal.hz_per_um_per_amp = cfg.gradient_slope * units::um;
  cal.hz_per_site_per_amp = cal.hz_per_um_per_amp * (cfg.site_spacing() / units::um);
  // G/m and uG/um are numerically identical.
  cal.microgauss_per_um_per_amp = units::two_pi * cfg.gradient_slope / cfg.gamma();
  cal.site_splitting_hz = units::cyclic(cfg.site_splitting(current));
  cal.gradient_gauss_per_cm = std::abs(cfg.field_gradient(current)) / 100.0;
  cal.delta0_hz = units::cyclic(cfg.delta0());
  cal.radial_curvature_hz_per_um2 = units::cyclic(cfg.radial_curvature(current)) * units::um * units::um;
  return cal;
}

/// 1/sqrt(e) width of a thermal harmonic-oscillator wave packet,
/// sqrt(hbar (2 n + 1) / (2 m omega)).
inline double thermal_width(double mean_occupation, double trap_frequency, double mass) {
  return std::sqrt(units::hbar * (2.0 * mean_occupation + 1.0) / (2.0 * mass * trap_frequency));
}

struct ThermalWidths {
  double axial;   // m
  double radial;  // m, per transverse component
};

inline ThermalWidths thermal_widths(const ApparatusConfig& cfg) {
  return {thermal_width(cfg.mean_occupation_axial, cfg.trap_freq_axial, cfg.atom_mass),
          thermal_width(cfg.mean_occupation_radial, cfg.trap_freq_radial, cfg.atom_mass)};
}

}  // namespace mwaddr
