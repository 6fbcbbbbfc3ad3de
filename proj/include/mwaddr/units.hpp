#pragma once

#include <numbers>

// Internal units are SI (m, s, rad/s, kg, K, A) except magnetic fields,
// which stay in gauss like the rest of the apparatus bookkeeping.
namespace mwaddr::units {

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

inline constexpr double hbar = 1.054571817e-34;       // J s
inline constexpr double h_planck = 6.62607015e-34;    // J s
inline constexpr double k_boltzmann = 1.380649e-23;   // J/K
inline constexpr double bohr_magneton_hz_per_gauss = 1.39962449361e6;  // mu_B / h

inline constexpr double cs133_mass = 2.20694657e-25;  // kg

inline constexpr double um = 1e-6;
inline constexpr double nm = 1e-9;
inline constexpr double us = 1e-6;
inline constexpr double kHz = 1e3;

/// Cyclic frequency in Hz to angular frequency in rad/s.
constexpr double angular(double hz) { return two_pi * hz; }
/// Angular frequency in rad/s to cyclic frequency in Hz.
constexpr double cyclic(double rad_per_s) { return rad_per_s / two_pi; }

// Gaussian 1/sqrt(e) half-width per FWHM.
inline constexpr double fwhm_per_sigma = 2.3548200450309493;

}  // namespace mwaddr::units
