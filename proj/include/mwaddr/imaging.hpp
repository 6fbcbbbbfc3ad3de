#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "least_squares.hpp"
#include "rng.hpp"
#include "simulation.hpp"
#include "units.hpp"

namespace mwaddr {

struct ImagingConfig {
  double psf_fwhm = 1.8e-6;        // m
  double pixel_size = 0.4e-6;      // m, in the object plane
  double photons_per_atom = 400.0; // detected counts per atom and exposure
  double background_rate = 0.01;   // counts per pixel
  long rows = 64;
  long margin_sites = 10;          // empty lattice sites imaged on either side
  bool noiseless = false;          // expected intensities instead of shot noise

  double psf_sigma() const { return psf_fwhm / units::fwhm_per_sigma; }

  void validate() const {
    if (!(psf_fwhm > 0.0)) throw ConfigError("psf_fwhm must be > 0");
    if (!(pixel_size > 0.0)) throw ConfigError("pixel_size must be > 0");
    if (!(photons_per_atom >= 0.0)) throw ConfigError("photons_per_atom must be >= 0");
    if (!(background_rate >= 0.0)) throw ConfigError("background_rate must be >= 0");
    if (rows < 1) throw ConfigError("rows must be >= 1");
  }
};

/// Point emitter in image coordinates: x along the lattice axis, y transverse (m).
struct Emitter {
  double x = 0.0;
  double y = 0.0;
};

/// Pixel grid. Column j covers [origin + j p, origin + (j+1) p); rows are centred on y = 0.
struct ImageGeometry {
  double origin = 0.0;  // m
  double pixel_size = 0.4e-6;
  long width = 1;
  long height = 1;

  double column_edge(long j) const { return origin + static_cast<double>(j) * pixel_size; }
  double column_center(long j) const { return column_edge(j) + pixel_size / 2.0; }
  double row_edge(long i) const {
    return (static_cast<double>(i) - static_cast<double>(height) / 2.0) * pixel_size;
  }

  /// Geometry covering the lattice plus margin; x = 0 is the reference site.
  static ImageGeometry for_lattice(long extent, long reference_site, double site_spacing,
                                   const ImagingConfig& cfg) {
    ImageGeometry g;
    g.pixel_size = cfg.pixel_size;
    g.origin = static_cast<double>(-reference_site - cfg.margin_sites) * site_spacing;
    const double span = static_cast<double>(extent - 1 + 2 * cfg.margin_sites) * site_spacing;
    g.width = static_cast<long>(std::ceil(span / cfg.pixel_size)) + 1;
    g.height = cfg.rows;
    return g;
  }
};

struct SyntheticImage {
  ImageGeometry geometry;
  std::vector<double> pixels;   // row-major, height x width
  std::vector<double> profile;  // column sums (vertical binning)

  double& at(long row, long col) {
    return pixels[static_cast<std::size_t>(row * geometry.width + col)];
  }
  double at(long row, long col) const {
    return pixels[static_cast<std::size_t>(row * geometry.width + col)];
  }
  double total() const {
    double s = 0.0;
    for (double v : pixels) s += v;
    return s;
  }
};

namespace detail {
inline double normal_cdf(double u) { return 0.5 * std::erfc(-u / std::sqrt(2.0)); }
inline double normal_pdf(double u) { return std::exp(-0.5 * u * u) / std::sqrt(2.0 * units::pi); }
}  // namespace detail

inline void bin_profile(SyntheticImage& img) {
  const auto& g = img.geometry;
  img.profile.assign(static_cast<std::size_t>(g.width), 0.0);
  for (long r = 0; r < g.height; ++r) {
    for (long c = 0; c < g.width; ++c) img.profile[static_cast<std::size_t>(c)] += img.at(r, c);
  }
}

/// Gaussian PSF spots for each emitter plus background.
///
/// Noisy mode draws a Poisson photon number per atom, scatters each photon through the
/// PSF and adds Poisson background per pixel. Noiseless mode writes the pixel-integrated
/// expectation values.
inline SyntheticImage render_image(std::span<const Emitter> emitters, const ImageGeometry& geometry,
                                   const ImagingConfig& cfg, Rng& rng) {
  cfg.validate();
  SyntheticImage img;
  img.geometry = geometry;
  img.pixels.assign(static_cast<std::size_t>(geometry.width * geometry.height), 0.0);
  const double sigma = cfg.psf_sigma();
  const double p = geometry.pixel_size;
  const double top = geometry.row_edge(0);

  if (cfg.noiseless) {
    std::vector<double> fx(static_cast<std::size_t>(geometry.width));
    std::vector<double> fy(static_cast<std::size_t>(geometry.height));
    for (const auto& e : emitters) {
      for (long c = 0; c < geometry.width; ++c) {
        const double a = (geometry.column_edge(c) - e.x) / sigma;
        fx[static_cast<std::size_t>(c)] = detail::normal_cdf(a + p / sigma) - detail::normal_cdf(a);
      }
      for (long r = 0; r < geometry.height; ++r) {
        const double a = (geometry.row_edge(r) - e.y) / sigma;
        fy[static_cast<std::size_t>(r)] = detail::normal_cdf(a + p / sigma) - detail::normal_cdf(a);
      }
      for (long r = 0; r < geometry.height; ++r) {
        for (long c = 0; c < geometry.width; ++c) {
          img.at(r, c) += cfg.photons_per_atom * fx[static_cast<std::size_t>(c)] *
                          fy[static_cast<std::size_t>(r)];
        }
      }
    }
    for (double& v : img.pixels) v += cfg.background_rate;
  } else {
    std::poisson_distribution<long> photons(cfg.photons_per_atom);
    std::normal_distribution<double> spread(0.0, sigma);
    for (const auto& e : emitters) {
      const long n = cfg.photons_per_atom > 0.0 ? photons(rng) : 0;
      for (long k = 0; k < n; ++k) {
        const double x = e.x + spread(rng);
        const double y = e.y + spread(rng);
        const long c = static_cast<long>(std::floor((x - geometry.origin) / p));
        const long r = static_cast<long>(std::floor((y - top) / p));
        if (c >= 0 && c < geometry.width && r >= 0 && r < geometry.height) img.at(r, c) += 1.0;
      }
    }
    if (cfg.background_rate > 0.0) {
      std::poisson_distribution<long> bg(cfg.background_rate);
      for (double& v : img.pixels) v += static_cast<double>(bg(rng));
    }
  }
  bin_profile(img);
  return img;
}

/// Imaged positions of the survivors of one shot: lattice position plus thermal and drift offsets.
inline std::vector<Emitter> emitters_for_shot(const ShotRecord& shot, long reference_site,
                                              double site_spacing) {
  std::vector<Emitter> out;
  out.reserve(shot.survivors.size());
  for (const auto& a : shot.survivors) {
    out.push_back({static_cast<double>(a.site - reference_site) * site_spacing + a.axial +
                       shot.drift_offset,
                   a.radial_y});
  }
  return out;
}

struct PositionEstimate {
  double position = 0.0;     // m
  double uncertainty = 0.0;  // m, 1 sigma from the fit covariance
  double amplitude = 0.0;    // counts
};

struct PositionFit {
  std::vector<PositionEstimate> atoms;  // sorted by position
  double background = 0.0;              // counts per column
  double reduced_chi2 = 0.0;
};

namespace detail {

/// Background plus equal-width, pixel-integrated Gaussians on the binned profile.
/// Parameter layout: [background, A_1, x_1, A_2, x_2, ...], or with a shared amplitude
/// [background, A, x_1, x_2, ...].
struct ProfileModel {
  std::span<const double> data;
  const ImageGeometry* geometry;
  double sigma;
  bool shared_amplitude = false;

  Eigen::Index size() const { return static_cast<Eigen::Index>(data.size()); }

  double weight(Eigen::Index j) const { return 1.0 / std::sqrt(std::max(data[j], 1.0)); }

  long components(const Eigen::VectorXd& p) const {
    return shared_amplitude ? static_cast<long>(p.size()) - 2 : (static_cast<long>(p.size()) - 1) / 2;
  }
  Eigen::Index amp_index(long k) const { return shared_amplitude ? 1 : 1 + 2 * k; }
  Eigen::Index pos_index(long k) const { return shared_amplitude ? 2 + k : 2 + 2 * k; }

  std::vector<double> evaluate(const Eigen::VectorXd& p) const {
    std::vector<double> m(data.size(), p[0]);
    const double step = geometry->pixel_size / sigma;
    for (long k = 0; k < components(p); ++k) {
      const double amp = p[amp_index(k)], mu = p[pos_index(k)];
      for (std::size_t j = 0; j < m.size(); ++j) {
        const double a = (geometry->column_edge(static_cast<long>(j)) - mu) / sigma;
        if (a > 8.0 || a + step < -8.0) continue;
        m[j] += amp * (normal_cdf(a + step) - normal_cdf(a));
      }
    }
    return m;
  }

  void operator()(const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd* jac) const {
    const auto m = evaluate(p);
    for (Eigen::Index j = 0; j < size(); ++j) r[j] = (m[j] - data[j]) * weight(j);
    if (!jac) return;
    jac->setZero();
    const double step = geometry->pixel_size / sigma;
    for (Eigen::Index j = 0; j < size(); ++j) {
      const double w = weight(j);
      (*jac)(j, 0) = w;
      for (long k = 0; k < components(p); ++k) {
        const double amp = p[amp_index(k)], mu = p[pos_index(k)];
        const double a = (geometry->column_edge(static_cast<long>(j)) - mu) / sigma;
        if (a > 8.0 || a + step < -8.0) continue;
        (*jac)(j, amp_index(k)) += (normal_cdf(a + step) - normal_cdf(a)) * w;
        (*jac)(j, pos_index(k)) = amp * (normal_pdf(a) - normal_pdf(a + step)) / sigma * w;
      }
    }
  }

  /// Shared-amplitude parameters expanded to the per-component layout.
  Eigen::VectorXd expanded(const Eigen::VectorXd& p) const {
    if (!shared_amplitude) return p;
    const long n = components(p);
    Eigen::VectorXd out(1 + 2 * n);
    out[0] = p[0];
    for (long k = 0; k < n; ++k) {
      out[1 + 2 * k] = p[1];
      out[2 + 2 * k] = p[2 + k];
    }
    return out;
  }
};

inline LmResult fit_profile(const ProfileModel& model, const Eigen::VectorXd& start) {
  LmOptions opts;
  opts.relative_tolerance = 1e-12;
  opts.max_iterations = 300;
  return levenberg_marquardt(model, start, model.size(), opts);
}

/// Start with n equal components at the equal-count quantiles of the background-subtracted profile.
inline Eigen::VectorXd quantile_start(std::span<const double> profile, const ImageGeometry& g,
                                      double background, int n) {
  std::vector<double> w(profile.size());
  double total = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) total += (w[j] = std::max(profile[j] - background, 0.0));
  Eigen::VectorXd p(1 + 2 * n);
  p[0] = background;
  double cum = 0.0;
  std::size_t j = 0;
  for (int i = 0; i < n; ++i) {
    const double target = (i + 0.5) / n * total;
    while (j + 1 < w.size() && cum + w[j] < target) cum += w[j++];
    const double frac = w[j] > 0.0 ? std::clamp((target - cum) / w[j], 0.0, 1.0) : 0.5;
    p[1 + 2 * i] = std::max(total / n, 1.0);
    p[2 + 2 * i] = g.column_edge(static_cast<long>(j)) + frac * g.pixel_size;
  }
  return p;
}

/// Positive amplitudes and every centre on the imaged columns.
inline bool physical(const Eigen::VectorXd& p, const ImageGeometry& g) {
  if (!p.allFinite()) return false;
  const double lo = g.column_edge(0), hi = g.column_edge(g.width);
  for (Eigen::Index c = 1; c + 1 < p.size(); c += 2) {
    if (!(p[c] > 0.0) || p[c + 1] < lo || p[c + 1] > hi) return false;
  }
  return true;
}

}  // namespace detail

/// Least-squares localisation of atoms on the vertically binned profile.
///
/// With a count hint exactly that many components are fitted. Otherwise components are
/// added one at a time at the largest residual while the reduced chi^2 improves by more
/// than 5 %, and the result is refitted with the atom number given by the total fitted
/// fluorescence when that disagrees (unresolved neighbours, spurious components).
inline PositionFit estimate_positions(const SyntheticImage& image, const ImagingConfig& cfg,
                                      std::optional<int> atom_count_hint = std::nullopt,
                                      int max_components = 40) {
  if (image.profile.empty()) throw FitFailure("estimate_positions: empty image");
  const ImageGeometry& g = image.geometry;
  detail::ProfileModel model{image.profile, &g, cfg.psf_sigma()};

  std::vector<double> sorted = image.profile;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(sorted.size() / 4), sorted.end());
  Eigen::VectorXd params(1);
  params[0] = std::max(sorted[sorted.size() / 4], 0.0);
  LmResult current = detail::fit_profile(model, params);
  params = current.params;

  // Peak value of a unit-amplitude spot sampled by one column.
  const double spot_peak = std::erf(g.pixel_size / (2.0 * std::sqrt(2.0) * cfg.psf_sigma()));
  const int target = atom_count_hint ? *atom_count_hint : max_components;
  int stalled = 0;
  while ((params.size() - 1) / 2 < target) {
    const auto m = model.evaluate(params);
    std::size_t best = 0;
    double best_res = -1e300;
    for (std::size_t j = 0; j < m.size(); ++j) {
      // Smooth over three columns so single noisy pixels do not seed components.
      double res = 0.0;
      for (long d = -1; d <= 1; ++d) {
        const long jj = std::clamp<long>(static_cast<long>(j) + d, 0, static_cast<long>(m.size()) - 1);
        res += image.profile[static_cast<std::size_t>(jj)] - m[static_cast<std::size_t>(jj)];
      }
      if (res > best_res) {
        best_res = res;
        best = j;
      }
    }
    Eigen::VectorXd trial(params.size() + 2);
    trial.head(params.size()) = params;
    trial[params.size()] = std::max(best_res / 3.0 / spot_peak, 1.0);
    trial[params.size() + 1] = g.column_center(static_cast<long>(best));
    LmResult next = detail::fit_profile(model, trial);
    if (!next.params.allFinite()) {
      if (++stalled > 2) throw FitFailure("estimate_positions: residual reduction stalled");
      continue;
    }
    if (!atom_count_hint) {
      const double before = current.reduced_chi2();
      const double after = next.reduced_chi2();
      if (!detail::physical(next.params, g) || !(after < 0.95 * before)) break;
    }
    current = next;
    params = next.params;
  }
  std::optional<LmResult> tied_fit;
  if (atom_count_hint && *atom_count_hint > 1) {
    // Free amplitudes are nearly degenerate for unresolved clusters; every atom scatters the
    // same mean fluorescence, so a counted fit shares one amplitude. Two starts, best chi^2.
    const int n = *atom_count_hint;
    detail::ProfileModel tied = model;
    tied.shared_amplitude = true;
    std::vector<Eigen::VectorXd> starts;
    const Eigen::VectorXd q = detail::quantile_start(image.profile, g, params[0], n);
    starts.push_back(q);
    if ((params.size() - 1) / 2 == n) {
      Eigen::VectorXd greedy = q;
      for (long c = 0; c < n; ++c) greedy[2 + 2 * c] = params[2 + 2 * c];
      starts.push_back(greedy);
    }
    std::optional<LmResult> best;
    for (const auto& st : starts) {
      Eigen::VectorXd t(2 + n);
      t[0] = st[0];
      t[1] = st[1];
      for (long c = 0; c < n; ++c) t[2 + c] = st[2 + 2 * c];
      LmResult r = detail::fit_profile(tied, t);
      if (detail::physical(tied.expanded(r.params), g) && (!best || r.chi2 < best->chi2)) best = std::move(r);
    }
    if (best) {
      tied_fit = *best;
      current = *best;
      params = tied.expanded(best->params);
    }
  }
  if (atom_count_hint && (params.size() - 1) / 2 != *atom_count_hint) {
    throw FitFailure("estimate_positions: could not place the requested number of atoms");
  }

  PositionFit out;
  out.background = params[0];
  out.reduced_chi2 = current.reduced_chi2();
  const long k = (params.size() - 1) / 2;
  for (long c = 0; c < k; ++c) {
    const double var = tied_fit ? tied_fit->covariance(2 + c, 2 + c) : current.covariance(2 + 2 * c, 2 + 2 * c);
    out.atoms.push_back({params[2 + 2 * c], std::sqrt(std::max(var, 0.0)), params[1 + 2 * c]});
  }
  std::sort(out.atoms.begin(), out.atoms.end(),
            [](const auto& a, const auto& b) { return a.position < b.position; });
  if (atom_count_hint || !(cfg.photons_per_atom > 0.0)) return out;

  double total = 0.0;
  for (const auto& a : out.atoms) total += a.amplitude;
  const long n = std::lround(total / cfg.photons_per_atom);
  if (n == k || n < 0 || n > max_components) return out;
  try {
    return estimate_positions(image, cfg, static_cast<int>(n), max_components);
  } catch (const FitFailure&) {
    return out;
  }
}

/// Model selection with the fluorescence-count refit; kept as the batch entry point.
inline PositionFit estimate_positions_counted(const SyntheticImage& image, const ImagingConfig& cfg,
                                              int max_components = 40) {
  return estimate_positions(image, cfg, std::nullopt, max_components);
}

/// Binned counts; bin k is centred on k * bin_width.
struct Histogram {
  double bin_width = 0.25;
  std::vector<long> counts;
  long paired = 0;   // groups contributing a distance
  long skipped = 0;  // groups with a missing or extra atom

  double center(std::size_t k) const { return static_cast<double>(k) * bin_width; }
  long total() const {
    long t = 0;
    for (long c : counts) t += c;
    return t;
  }
  void add(double value) {
    const long k = std::lround(value / bin_width);
    if (k < 0) return;
    if (static_cast<std::size_t>(k) >= counts.size()) counts.resize(static_cast<std::size_t>(k) + 1, 0);
    ++counts[static_cast<std::size_t>(k)];
  }
};

/// Intra-pair distances in site units. For every shot and every pair centre, the estimates
/// within `window` (m) of the centre are collected; exactly two form a pair, anything
/// else is counted as skipped.
inline Histogram pair_distance_histogram(const std::vector<std::vector<double>>& positions_per_shot,
                                         const std::vector<double>& pair_centers, double window,
                                         double bin_width_sites, double site_spacing) {
  Histogram h;
  h.bin_width = bin_width_sites;
  for (const auto& shot : positions_per_shot) {
    for (double c : pair_centers) {
      std::vector<double> members;
      for (double x : shot) {
        if (std::abs(x - c) <= window) members.push_back(x);
      }
      if (members.size() != 2) {
        ++h.skipped;
        continue;
      }
      ++h.paired;
      h.add(std::abs(members[1] - members[0]) / site_spacing);
    }
  }
  return h;
}

/// `position_um,counts`.
inline void write_profile_csv(std::ostream& os, const ImageGeometry& g, std::span<const double> profile) {
  os << "position_um,counts\n";
  char line[96];
  for (std::size_t j = 0; j < profile.size(); ++j) {
    std::snprintf(line, sizeof line, "%.15g,%.15g\n", g.column_center(static_cast<long>(j)) / units::um,
                  profile[j]);
    os << line;
  }
}

/// Binary 16-bit PGM (P5, maxval 65535, most significant byte first). Values are rounded
/// and clamped to [0, 65535] after multiplying by `scale`.
inline void write_pgm16(std::ostream& os, const SyntheticImage& img, double scale = 1.0) {
  const auto& g = img.geometry;
  os << "P5\n" << g.width << ' ' << g.height << "\n65535\n";
  for (long r = 0; r < g.height; ++r) {
    for (long c = 0; c < g.width; ++c) {
      const double v = std::clamp(std::round(img.at(r, c) * scale), 0.0, 65535.0);
      const auto u = static_cast<std::uint16_t>(v);
      os.put(static_cast<char>(u >> 8));
      os.put(static_cast<char>(u & 0xff));
    }
  }
}

}  // namespace mwaddr
