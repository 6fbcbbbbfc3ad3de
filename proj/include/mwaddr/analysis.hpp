#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>

#include "errors.hpp"
#include "gaussian_fit.hpp"
#include "imaging.hpp"
#include "physics.hpp"
#include "pulse.hpp"

namespace mwaddr {

// ---------------------------------------------------------------------------
// Drift convolution

struct DriftProfile {
  std::vector<double> z;       // sites
  std::vector<double> value;   // peak-normalised
  double fitted_width = 0.0;   // sites
};

/// Unit Gaussian of width sigma (sites) averaged over a uniform drift of one site.
inline double drift_broadened(double z, double sigma) {
  if (sigma == 0.0) return (z > -0.5 && z < 0.5) ? 1.0 : (std::abs(z) == 0.5 ? 0.5 : 0.0);
  const double s = std::sqrt(2.0) * sigma;
  // sqrt(2 pi) sigma normalisation keeps the peak of the unbroadened Gaussian at 1.
  return std::sqrt(2.0 * units::pi) * sigma * 0.5 * (std::erf((z + 0.5) / s) - std::erf((z - 0.5) / s));
}

/// Gaussian selectivity profile convolved with the one-site box kernel, and the width of a
/// Gaussian fitted to the result. The fit grid spans +/-6 sqrt(sigma^2 + 1/12) with 601 points.
inline DriftProfile drift_convolve(double sigma_z) {
  if (!(sigma_z >= 0.0)) throw ConfigError("drift_convolve: sigma must be >= 0");
  DriftProfile out;
  const double span = 6.0 * std::sqrt(sigma_z * sigma_z + 1.0 / 12.0);
  constexpr int n = 601;
  out.z.resize(n);
  out.value.resize(n);
  for (int i = 0; i < n; ++i) {
    out.z[i] = -span + 2.0 * span * i / (n - 1);
    out.value[i] = drift_broadened(out.z[i], sigma_z);
  }
  out.fitted_width = fit_gaussian(out.z, out.value).sigma;
  return out;
}

/// Fitted width of the bare one-site kernel; the smallest width drift_deconvolve accepts.
inline double drift_kernel_width() { return drift_convolve(0.0).fitted_width; }

/// Drift-free width sigma with drift_convolve(sigma).fitted_width == measured.
inline double drift_deconvolve(double measured_sigma) {
  const double kernel = drift_kernel_width();
  if (!(measured_sigma > kernel)) {
    throw Infeasible("measured width " + std::to_string(measured_sigma) +
                     " is not above the drift-kernel width " + std::to_string(kernel));
  }
  auto f = [&](double s) { return drift_convolve(s).fitted_width - measured_sigma; };
  std::uintmax_t iters = 100;
  const auto tol = [](double a, double b) { return std::abs(a - b) < 1e-10; };
  const auto [lo, hi] = boost::math::tools::toms748_solve(f, 0.0, measured_sigma, tol, iters);
  return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------
// Effective spectra under thermal motion and radial offset

struct EffectiveSpectrumOptions {
  double z_span = 3.0;        // sites on either side of resonance
  int z_points = 61;
  double cutoff_sigmas = 5.0; // truncation of each thermal Gaussian
  double tolerance = 1e-7;    // relative, per quadrature level
};

struct EffectiveSpectrum {
  std::vector<double> z;        // axial displacement z' in sites
  std::vector<double> transfer; // thermally averaged transfer
  double p_max = 0.0;           // fitted peak
  double sigma_z = 0.0;         // fitted 1/sqrt(e) half-width, sites
  double center = 0.0;          // fitted centre, sites
  double reference_p_max = 0.0; // P_max^M of the bare spectrum

  double normalized_p_max() const { return p_max / reference_p_max; }
};

/// Averages the M-loop transfer over Gaussian thermal displacements at one axial offset.
///
/// Displacements are taken as fixed for the duration of the sequence, so the quantity
/// averaged is the M-th power of the single-loop spectrum.
inline double thermal_average(double z_prime, double rho0, const GaussianModel& single, int loops,
                              double current, const ApparatusConfig& cfg,
                              const EffectiveSpectrumOptions& opts = {}) {
  using boost::math::quadrature::gauss_kronrod;
  const ThermalWidths w = thermal_widths(cfg);
  const GaussianModel model = single.compose(loops);
  const double wp = cfg.omega_prime(current);
  const double curv = cfg.radial_curvature(current);
  const double cut = opts.cutoff_sigmas;
  const double mass = std::erf(cut / std::sqrt(2.0));
  auto pdf = [](double u) { return std::exp(-0.5 * u * u) / std::sqrt(2.0 * units::pi); };

  // Integration variables are in units of the respective thermal width.
  auto over_axial = [&](double radial_shift) {
    auto f = [&](double u) { return model(wp * (z_prime + u * w.axial) + radial_shift) * pdf(u); };
    return gauss_kronrod<double, 15>::integrate(f, -cut, cut, 8, opts.tolerance);
  };
  auto over_y = [&](double x) {
    auto f = [&](double v) {
      const double y = v * w.radial;
      const double shift = curv * ((rho0 + x) * (rho0 + x) + y * y - rho0 * rho0);
      return over_axial(shift) * pdf(v);
    };
    return gauss_kronrod<double, 15>::integrate(f, -cut, cut, 8, opts.tolerance);
  };
  auto over_x = [&](double u) { return over_y(u * w.radial) * pdf(u); };
  const double integral = gauss_kronrod<double, 15>::integrate(over_x, -cut, cut, 8, opts.tolerance);
  return integral / (mass * mass * mass);
}

inline EffectiveSpectrum effective_spectrum(double rho0, const GaussianModel& single, int loops,
                                            double current, const ApparatusConfig& cfg,
                                            const EffectiveSpectrumOptions& opts = {}) {
  if (loops < 1) throw ConfigError("loop count must be >= 1");
  const double site = cfg.site_spacing();
  EffectiveSpectrum out;
  out.reference_p_max = single.compose(loops).p_max;
  for (int i = 0; i < opts.z_points; ++i) {
    const double z = -opts.z_span + 2.0 * opts.z_span * i / (opts.z_points - 1);
    out.z.push_back(z);
    out.transfer.push_back(thermal_average(z * site, rho0, single, loops, current, cfg, opts));
  }
  const GaussianFit fit = fit_gaussian(out.z, out.transfer);
  out.p_max = fit.amplitude;
  out.sigma_z = fit.sigma;
  out.center = fit.center;
  return out;
}

/// Radial offset whose effective spectrum has P_max / P_max(M) equal to target_ratio.
inline double infer_radial_offset(double target_ratio, const GaussianModel& single, int loops,
                                  double current, const ApparatusConfig& cfg,
                                  double max_offset = 200e-6,
                                  const EffectiveSpectrumOptions& opts = {}) {
  auto ratio = [&](double rho0) {
    return effective_spectrum(rho0, single, loops, current, cfg, opts).normalized_p_max() - target_ratio;
  };
  const double r_lo = ratio(0.0), r_hi = ratio(max_offset);
  if (r_lo < 0.0 || r_hi > 0.0) {
    throw Infeasible("target ratio is outside the range reachable with offsets up to max_offset");
  }
  std::uintmax_t iters = 60;
  const auto tol = [&](double a, double b) { return std::abs(a - b) < 1e-3 * units::um; };
  const auto [lo, hi] = boost::math::tools::toms748_solve(ratio, 0.0, max_offset, r_lo, r_hi, tol, iters);
  return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------
// Addressed regions

struct RegionRow {
  double rho = 0.0;     // m, radial displacement along the offset direction
  double z_low = 0.0;   // sites
  double z_high = 0.0;  // sites
  double center() const { return 0.5 * (z_low + z_high); }
};

struct AddressedRegion {
  int k = 1;
  std::vector<double> z;    // sites
  std::vector<double> rho;  // m
  std::vector<std::uint8_t> mask;  // rho-major: mask[i * z.size() + j]
  std::vector<RegionRow> rows;     // exact boundary per rho row

  bool inside(std::size_t rho_index, std::size_t z_index) const {
    return mask[rho_index * z.size() + z_index] != 0;
  }
};

struct RegionGrid {
  double z_span = 3.0;          // sites
  double z_step = 0.02;         // sites
  double rho_span_sigmas = 3.0; // in radial thermal widths
  double rho_step_sigmas = 0.05;
};

/// Points (z', rho') with |delta(r', r0)| <= k sigma_omega in the plane containing the offset.
/// Inside, the Gaussian pulse transfers at least exp(-k^2/2) P_max.
inline AddressedRegion addressed_region(double rho0, double sigma_omega, double current,
                                        const ApparatusConfig& cfg, int k,
                                        const RegionGrid& grid = {}) {
  AddressedRegion out;
  out.k = k;
  const double site = cfg.site_spacing();
  const double sr = thermal_widths(cfg).radial;
  const long nz = std::lround(grid.z_span / grid.z_step);
  const long nr = std::lround(grid.rho_span_sigmas / grid.rho_step_sigmas);
  for (long j = -nz; j <= nz; ++j) out.z.push_back(static_cast<double>(j) * grid.z_step);
  for (long i = -nr; i <= nr; ++i) out.rho.push_back(static_cast<double>(i) * grid.rho_step_sigmas * sr);
  const Position r0{rho0, 0.0, cfg.axial_offset};
  const double bound = k * sigma_omega;
  const double wp = cfg.omega_prime(current);
  for (double rho : out.rho) {
    for (double z : out.z) {
      const double d = detuning({rho, 0.0, z * site}, r0, current, cfg, ValidityPolicy::ignore);
      out.mask.push_back(std::abs(d) <= bound ? 1 : 0);
    }
    // Detuning is linear in z', so each row is an exact interval.
    const double radial = detuning({rho, 0.0, 0.0}, r0, current, cfg, ValidityPolicy::ignore);
    out.rows.push_back({rho, (-bound - radial) / wp / site, (bound - radial) / wp / site});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Radial offset calibration

struct OffsetScanPoint {
  double field = 0.0;     // G, applied transverse field
  double position = 0.0;  // m, axial position of the resonance
};

/// Resonance positions of a fixed-frequency pulse while a homogeneous transverse field
/// shifts the quadrupole axis. `offset_along` is the lattice offset along the scan direction,
/// `offset_across` the orthogonal component.
inline std::vector<OffsetScanPoint> synthetic_offset_scan(const std::vector<double>& fields,
                                                          double offset_along, double offset_across,
                                                          double current, const ApparatusConfig& cfg,
                                                          double pulse_detuning = 0.0) {
  const double b = cfg.field_gradient(current);
  const double wp = cfg.omega_prime(current);
  const double c = cfg.radial_curvature(current);
  std::vector<OffsetScanPoint> out;
  for (double f : fields) {
    // A transverse field f moves the zero of B_x to x = 2 f / B'.
    const double x = offset_along - 2.0 * f / b;
    out.push_back({f, (pulse_detuning - c * (x * x + offset_across * offset_across)) / wp});
  }
  return out;
}

struct OffsetCalibration {
  double a = 0.0, b = 0.0, c = 0.0;  // position = a f^2 + b f + c
  Eigen::Matrix3d covariance = Eigen::Matrix3d::Zero();
  double vertex_field = 0.0;         // G, compensating field
  double vertex_position = 0.0;      // m
  double offset_estimate = 0.0;      // m, lattice offset along the scan direction
  double expected_curvature = 0.0;   // m/G^2 from the field model
  double curvature_ratio = 0.0;      // a / expected_curvature
};

/// Quadratic least-squares fit of resonance position versus applied field.
inline OffsetCalibration offset_calibration_fit(const std::vector<OffsetScanPoint>& data,
                                                double current, const ApparatusConfig& cfg) {
  if (data.size() < 4) throw DegenerateFit("offset calibration needs at least 4 points");
  const auto n = static_cast<Eigen::Index>(data.size());
  // Centre and scale the abscissa for conditioning.
  double fmean = 0.0;
  for (const auto& d : data) fmean += d.field;
  fmean /= static_cast<double>(n);
  double fscale = 0.0;
  for (const auto& d : data) fscale = std::max(fscale, std::abs(d.field - fmean));
  if (!(fscale > 0.0)) throw DegenerateFit("offset calibration needs distinct field values");
  Eigen::MatrixXd design(n, 3);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = (data[i].field - fmean) / fscale;
    design(i, 0) = u * u;
    design(i, 1) = u;
    design(i, 2) = 1.0;
    y[i] = data[i].position;
  }
  const Eigen::Vector3d beta = design.colPivHouseholderQr().solve(y);
  const Eigen::VectorXd resid = design * beta - y;
  const double dof = static_cast<double>(n - 3);
  const double s2 = dof > 0 ? resid.squaredNorm() / dof : 0.0;
  const Eigen::Matrix3d cov_u = (design.transpose() * design).inverse() * s2;

  // Back to the unscaled polynomial in f.
  const double a = beta[0] / (fscale * fscale);
  const double b = beta[1] / fscale - 2.0 * a * fmean;
  const double c = beta[2] - beta[1] * fmean / fscale + a * fmean * fmean;
  const double a_err = std::sqrt(cov_u(0, 0)) / (fscale * fscale);
  if (a == 0.0 || (a_err > 0.0 && std::abs(a) <= 2.0 * a_err)) {
    throw DegenerateFit("offset scan shows no significant curvature");
  }
  Eigen::Matrix3d jac;  // d(a,b,c)/d(beta)
  jac << 1.0 / (fscale * fscale), 0.0, 0.0,
      -2.0 * fmean / (fscale * fscale), 1.0 / fscale, 0.0,
      fmean * fmean / (fscale * fscale), -fmean / fscale, 1.0;

  OffsetCalibration out;
  out.a = a;
  out.b = b;
  out.c = c;
  out.covariance = jac * cov_u * jac.transpose();
  out.vertex_field = -b / (2.0 * a);
  out.vertex_position = c - b * b / (4.0 * a);
  out.offset_estimate = 2.0 * out.vertex_field / cfg.field_gradient(current);
  out.expected_curvature = -1.0 / (2.0 * cfg.field_gradient(current) * cfg.guiding_field);
  out.curvature_ratio = a / out.expected_curvature;
  return out;
}

/// Total radial offset from two orthogonal scans.
inline double combine_offset_scans(const OffsetCalibration& along_x, const OffsetCalibration& along_y) {
  return std::hypot(along_x.offset_estimate, along_y.offset_estimate);
}

// ---------------------------------------------------------------------------
// Histogram analysis

struct SelectivityEstimate {
  double sigma_dist = 0.0;  // sites
  double sigma_meas = 0.0;  // sites, sigma_dist / sqrt(2)
  double center = 0.0;      // sites
  GaussianFit fit;
};

/// Single-atom selectivity from the spread of pair distances.
inline SelectivityEstimate selectivity_from_histogram(const Histogram& h) {
  std::vector<double> x, y;
  // Pad with empty bins so the fit always sees the tails.
  const std::size_t n = h.counts.size() + 8;
  for (std::size_t k = 0; k < n; ++k) {
    x.push_back(h.center(k));
    y.push_back(k < h.counts.size() ? static_cast<double>(h.counts[k]) : 0.0);
  }
  SelectivityEstimate out;
  out.fit = fit_gaussian(x, y);
  out.sigma_dist = out.fit.sigma;
  out.sigma_meas = out.sigma_dist / std::sqrt(2.0);
  out.center = out.fit.center;
  return out;
}

inline void write_effective_spectrum_csv(std::ostream& os, const EffectiveSpectrum& s,
                                         double site_spacing) {
  os << "z_sites,z_nm,transfer\n";
  char line[96];
  for (std::size_t i = 0; i < s.z.size(); ++i) {
    std::snprintf(line, sizeof line, "%.15g,%.15g,%.15g\n", s.z[i], s.z[i] * site_spacing / units::nm,
                  s.transfer[i]);
    os << line;
  }
}

inline void write_region_csv(std::ostream& os, const AddressedRegion& r, double site_spacing) {
  os << "rho_um,z_low_sites,z_high_sites,z_low_nm,z_high_nm\n";
  char line[160];
  for (const auto& row : r.rows) {
    std::snprintf(line, sizeof line, "%.15g,%.15g,%.15g,%.15g,%.15g\n", row.rho / units::um, row.z_low,
                  row.z_high, row.z_low * site_spacing / units::nm, row.z_high * site_spacing / units::nm);
    os << line;
  }
}

inline void write_histogram_csv(std::ostream& os, const Histogram& h) {
  os << "distance_sites,count\n";
  char line[64];
  for (std::size_t k = 0; k < h.counts.size(); ++k) {
    std::snprintf(line, sizeof line, "%.15g,%ld\n", h.center(k), h.counts[k]);
    os << line;
  }
}

}  // namespace mwaddr
