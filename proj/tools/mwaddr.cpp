// mwaddr: command-line front end.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <mwaddr/mwaddr.hpp>

namespace fs = std::filesystem;
using namespace mwaddr;

namespace {

// Explicit --current wins over the config value; zero is passed through so it reaches ZeroGradient.
double resolve_current(double arg, double configured) {
  if (std::isnan(arg)) return configured;
  if (arg < 0.0) throw ConfigError("--current must be >= 0");
  return arg;
}

struct Common {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "configuration file")->check(CLI::ExistingFile);
  app->add_option("--out", c.out, "output file or directory");
  app->add_option("--seed", c.seed, "master random seed")->each([&c](const std::string&) {
    c.seed_set = true;
  });
}

std::string fmt(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

/// Writes text to `path`, or to stdout when path is empty.
void emit(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write '" + path + "'");
  f << text;
}

template <class Fn>
void write_file(const fs::path& path, Fn&& fn) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write '" + path.string() + "'");
  fn(f);
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (kv::trim(line).empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(kv::trim(cell));
    rows.push_back(std::move(cells));
  }
  return rows;
}

std::vector<double> parse_list(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!kv::trim(item).empty()) out.push_back(kv::parse_number(item, what));
  }
  return out;
}

std::optional<GaussianModel> model_from_flags(double p_max, double sigma_hz) {
  const bool has_p = p_max >= 0.0, has_s = sigma_hz > 0.0;
  if (has_p != has_s) throw ConfigError("--p-max and --sigma-omega must be given together");
  if (!has_p) return std::nullopt;
  return GaussianModel{p_max, units::angular(sigma_hz)};
}

void write_manifest(const fs::path& dir, const std::string& command, const Common& c,
                    const std::vector<std::string>& args) {
  RunManifest m;
  m.command = command;
  m.config_path = c.config;
  m.seed = c.seed;
  m.output_dir = c.out;
  m.timestamp = utc_timestamp();
  m.arguments = args;
  write_file(dir / "manifest.txt", [&](std::ostream& os) { os << serialize_manifest(m); });
}

// ---------------------------------------------------------------------------

struct CalibrateArgs {
  Common common;
  double current = std::numeric_limits<double>::quiet_NaN();
  bool exact_gamma = false;
};

int run_calibrate(const CalibrateArgs& a) {
  RunConfig rc = load_run_config(a.common.config);
  if (a.exact_gamma) rc.apparatus.gyromagnetic = GyromagneticModel::exact_cs;
  const double current = resolve_current(a.current, rc.apparatus.coil_current);
  const GradientCalibration cal = calibrate_gradient(rc.apparatus, current);
  const ThermalWidths w = thermal_widths(rc.apparatus);
  const double site = rc.apparatus.site_spacing();
  std::ostringstream os;
  os << "[calibration]\n"
     << "gyromagnetic = " << (a.exact_gamma || rc.apparatus.gyromagnetic == GyromagneticModel::exact_cs
                                  ? "exact_cs"
                                  : "rounded")
     << '\n'
     << "current = " << fmt(current) << " A\n"
     << "gradient_per_site = " << fmt(cal.hz_per_site_per_amp, 4) << " Hz/(site*A)\n"
     << "gradient_per_length = " << fmt(cal.hz_per_um_per_amp, 4) << " Hz/(um*A)\n"
     << "field_gradient_per_amp = " << fmt(cal.microgauss_per_um_per_amp, 4) << " uG/(um*A)\n"
     << "site_splitting = " << fmt(cal.site_splitting_hz / 1e3, 5) << " kHz\n"
     << "field_gradient = " << fmt(cal.gradient_gauss_per_cm, 5) << " G/cm\n"
     << "delta0 = " << fmt(cal.delta0_hz / 1e6, 6) << " MHz\n"
     << "radial_curvature = " << fmt(cal.radial_curvature_hz_per_um2, 5) << " Hz/um^2\n"
     << "thermal_width_axial = " << fmt(w.axial / units::nm, 4) << " nm\n"
     << "thermal_width_axial_sites = " << fmt(w.axial / site, 4) << '\n'
     << "thermal_width_radial = " << fmt(w.radial / units::um, 4) << " um\n";
  emit(a.common.out, os.str());
  return 0;
}

// ---------------------------------------------------------------------------

struct SpectrumArgs {
  Common common;
  std::string shape = "gaussian";
  double sigma_t = 20e-6;
  double duration = 0.0;
  double t2 = -1.0;
  int loops = 1;
  bool position = false;
  double current = std::numeric_limits<double>::quiet_NaN();
};

int run_spectrum(const SpectrumArgs& a) {
  const RunConfig rc = load_run_config(a.common.config);
  const ApparatusConfig& cfg = rc.apparatus;
  PulseDescriptor pulse;
  if (a.shape == "gaussian") {
    pulse = PulseDescriptor::gaussian_pi(a.sigma_t);
  } else if (a.shape == "rectangular") {
    pulse = a.duration > 0.0 ? PulseDescriptor::rectangular(a.duration, units::pi / a.duration)
                             : PulseDescriptor::rectangular_pi(cfg.rabi_peak);
  } else {
    throw ConfigError("--shape must be gaussian or rectangular");
  }
  const double t2 = a.t2 < 0.0 ? cfg.t2 : (a.t2 == 0.0 ? std::numeric_limits<double>::infinity() : a.t2);
  Spectrum spec = bloch_spectrum(pulse, t2);
  if (a.loops > 1) spec = compose_loops(spec, a.loops);
  const double current = resolve_current(a.current, cfg.coil_current);
  std::ostringstream os;
  if (a.position) {
    const double split = cfg.site_splitting(current);
    os << "z_sites,detuning_hz,transfer\n";
    char line[96];
    for (const auto& s : spec.samples) {
      std::snprintf(line, sizeof line, "%.15g,%.15g,%.15g\n", s.detuning / split, units::cyclic(s.detuning),
                    s.transfer);
      os << line;
    }
    std::cerr << "sigma_z = " << fmt(*spec.fitted_sigma / split) << " sites\n";
  } else {
    write_spectrum_csv(os, spec);
  }
  std::cerr << "p_max = " << fmt(*spec.fitted_p_max) << "\nsigma_omega = "
            << fmt(units::cyclic(*spec.fitted_sigma)) << " Hz\n";
  emit(a.common.out, os.str());
  return 0;
}

// ---------------------------------------------------------------------------

struct PlanArgs {
  Common common;
  std::string pattern;
  double current = std::numeric_limits<double>::quiet_NaN();
  double sigma_t = 20e-6;
  int loops = 2;
  double p_max = -1.0;
  double sigma_omega = -1.0;  // Hz
};

int run_plan(const PlanArgs& a) {
  const RunConfig rc = load_run_config(a.common.config);
  const ApparatusConfig& cfg = rc.apparatus;
  const double current = resolve_current(a.current, cfg.coil_current);
  const TargetPattern pattern = TargetPattern::parse(a.pattern);
  PlanResult r = make_plan(pattern, current, PulseDescriptor::gaussian_pi(a.sigma_t), a.loops, cfg,
                           model_from_flags(a.p_max, a.sigma_omega));
  r.plan.seed = a.common.seed;
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
  emit(a.common.out, serialize_plan(r.plan));
  return 0;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  Common common;
  long shots = 500;
  std::string plan;
  double rho0 = std::numeric_limits<double>::quiet_NaN();
  double drift = std::numeric_limits<double>::quiet_NaN();
  unsigned workers = 1;
  std::string thermal;
  bool no_images = false;
  double bin_width = 1.0;
};

int run_simulate(const SimulateArgs& a, const std::vector<std::string>& args) {
  if (a.common.out.empty()) throw ConfigError("simulate needs --out <directory>");
  RunConfig rc = load_run_config(a.common.config);
  ApparatusConfig& cfg = rc.apparatus;
  ShotConfig& sc = rc.simulation;
  if (!std::isnan(a.rho0)) cfg.radial_offset = a.rho0;
  if (!std::isnan(a.drift)) sc.drift_rate = a.drift;
  if (a.common.seed_set) sc.seed = a.common.seed;
  if (!a.thermal.empty()) {
    const kv::Document d = kv::parse("[simulation]\nthermal = " + a.thermal + "\n");
    sc.thermal = read_simulation(d.find("simulation")).thermal;
  }
  sc.plan = load_plan(a.plan);
  cfg.validate();

  const EnsembleResult ens = run_ensemble(sc, a.shots, cfg, a.workers);
  for (const auto& w : ens.warnings) std::cerr << "warning: " << w << '\n';
  const fs::path dir(a.common.out);
  fs::create_directories(dir);
  write_file(dir / "atoms.csv", [&](std::ostream& os) { write_atoms_csv(os, ens); });
  write_file(dir / "summary.csv", [&](std::ostream& os) { write_summary_csv(os, ens); });

  std::ostringstream report;
  report << "[simulation]\nshots = " << a.shots << "\nreference_site = " << ens.reference_site
         << "\ncomplete_patterns = " << count_complete_patterns(ens) << '\n';
  if (!a.no_images) {
    const ImagedEnsemble im = image_ensemble(ens, sc, cfg, rc.imaging, a.workers);
    PairAnalysisOptions po;
    po.bin_width_sites = a.bin_width;
    const PairAnalysis pa = analyze_pairs(ens, im, cfg, po);
    write_file(dir / "positions.csv",
               [&](std::ostream& os) { write_positions_csv(os, im, ens, cfg.site_spacing()); });
    write_file(dir / "profile_mean.csv",
               [&](std::ostream& os) { write_profile_csv(os, im.geometry, im.mean_profile); });
    write_file(dir / "histogram.csv", [&](std::ostream& os) { write_histogram_csv(os, pa.histogram); });
    SyntheticImage mean{im.geometry, im.mean_image, im.mean_profile};
    double peak = 0.0;
    for (double v : mean.pixels) peak = std::max(peak, v);
    write_file(dir / "image_mean.pgm",
               [&](std::ostream& os) { write_pgm16(os, mean, peak > 0.0 ? 65535.0 / peak : 1.0); });
    report << "\n[pairs]\ngroups = " << pa.groups.size() << "\ncorrect_groups = " << pa.correct_groups
           << "\npaired_shots = " << pa.histogram.paired << "\nskipped = " << pa.histogram.skipped
           << "\nfailed_fits = " << im.failed_shots.size() << '\n';
    if (pa.selectivity) {
      report << "histogram_center = " << fmt(pa.selectivity->center) << " sites\nsigma_dist = "
             << fmt(pa.selectivity->sigma_dist) << " sites\nsigma_meas = "
             << fmt(pa.selectivity->sigma_meas) << " sites\n";
    }
  }
  write_file(dir / "report.txt", [&](std::ostream& os) { os << report.str(); });
  write_manifest(dir, "simulate", a.common, args);
  std::cout << report.str();
  return 0;
}

// ---------------------------------------------------------------------------

struct AnalyzeArgs {
  Common common;
  // histogram
  std::string positions;
  std::string centers;
  double window = 4.0;
  double bin_width = 1.0;
  // convolution
  double sigma = 0.0;
  // spectra and regions
  double rho0 = 0.0;
  double p_max = 0.843;
  double sigma_omega = 6.4e3;
  int loops = 2;
  double current = std::numeric_limits<double>::quiet_NaN();
  double target_ratio = -1.0;
  int k = 1;
  // offset calibration and generic fit
  std::string data;
  double synthetic_rho0 = std::numeric_limits<double>::quiet_NaN();
  double span = 1.0;
  int points = 11;
};

int run_analyze_histogram(const AnalyzeArgs& a) {
  const RunConfig rc = load_run_config(a.common.config);
  const double site = rc.apparatus.site_spacing();
  std::map<long, std::vector<double>> per_shot;
  for (const auto& row : read_csv(a.positions)) {
    if (row.size() < 2) throw ConfigError("positions file needs shot_index,position_um columns");
    per_shot[static_cast<long>(kv::parse_number(row[0], "shot_index"))].push_back(
        kv::parse_number(row[1], "position_um") * units::um);
  }
  std::vector<std::vector<double>> xs;
  for (auto& [k, v] : per_shot) xs.push_back(std::move(v));
  std::vector<double> centers;
  for (double c : parse_list(a.centers, "centers")) centers.push_back(c * site);
  const Histogram h = pair_distance_histogram(xs, centers, a.window * site, a.bin_width, site);
  std::ostringstream os;
  write_histogram_csv(os, h);
  emit(a.common.out, os.str());
  std::cerr << "paired = " << h.paired << "\nskipped = " << h.skipped << '\n';
  const SelectivityEstimate s = selectivity_from_histogram(h);
  std::cerr << "center = " << fmt(s.center) << " sites\nsigma_dist = " << fmt(s.sigma_dist)
            << " sites\nsigma_meas = " << fmt(s.sigma_meas) << " sites\n";
  return 0;
}

int run_analyze_convolve(const AnalyzeArgs& a) {
  const DriftProfile p = drift_convolve(a.sigma);
  std::ostringstream os;
  os << "fitted_width = " << fmt(p.fitted_width, 8) << " sites\n";
  emit(a.common.out, os.str());
  return 0;
}

int run_analyze_deconvolve(const AnalyzeArgs& a) {
  std::ostringstream os;
  os << "drift_free_width = " << fmt(drift_deconvolve(a.sigma), 8) << " sites\n";
  emit(a.common.out, os.str());
  return 0;
}

int run_analyze_effective(const AnalyzeArgs& a) {
  const RunConfig rc = load_run_config(a.common.config);
  const ApparatusConfig& cfg = rc.apparatus;
  const double current = resolve_current(a.current, cfg.coil_current);
  const GaussianModel single{a.p_max, units::angular(a.sigma_omega)};
  double rho0 = a.rho0;
  if (a.target_ratio > 0.0) {
    rho0 = infer_radial_offset(a.target_ratio, single, a.loops, current, cfg);
    std::cerr << "inferred_rho0 = " << fmt(rho0 / units::um) << " um\n";
  }
  const EffectiveSpectrum es = effective_spectrum(rho0, single, a.loops, current, cfg);
  std::ostringstream os;
  write_effective_spectrum_csv(os, es, cfg.site_spacing());
  emit(a.common.out, os.str());
  std::cerr << "p_max = " << fmt(es.p_max) << "\np_max_normalized = " << fmt(es.normalized_p_max())
            << "\nsigma_z = " << fmt(es.sigma_z) << " sites\n";
  return 0;
}

int run_analyze_region(const AnalyzeArgs& a) {
  const RunConfig rc = load_run_config(a.common.config);
  const ApparatusConfig& cfg = rc.apparatus;
  const double current = resolve_current(a.current, cfg.coil_current);
  const AddressedRegion r = addressed_region(a.rho0, units::angular(a.sigma_omega), current, cfg, a.k);
  std::ostringstream os;
  write_region_csv(os, r, cfg.site_spacing());
  emit(a.common.out, os.str());
  return 0;
}

int run_analyze_offset(const AnalyzeArgs& a) {
  const RunConfig rc = load_run_config(a.common.config);
  const ApparatusConfig& cfg = rc.apparatus;
  const double current = resolve_current(a.current, cfg.coil_current);
  std::vector<OffsetScanPoint> data;
  if (!a.data.empty()) {
    for (const auto& row : read_csv(a.data)) {
      if (row.size() < 2) throw ConfigError("offset data needs field_G,position_um columns");
      data.push_back({kv::parse_number(row[0], "field_G"), kv::parse_number(row[1], "position_um") * units::um});
    }
  } else if (!std::isnan(a.synthetic_rho0)) {
    const double b = std::abs(cfg.field_gradient(current));
    const double center = a.synthetic_rho0 * b / 2.0;
    std::vector<double> fields;
    for (int i = 0; i < a.points; ++i) {
      fields.push_back(center + a.span * (2.0 * i / (a.points - 1) - 1.0));
    }
    data = synthetic_offset_scan(fields, a.synthetic_rho0, 0.0, current, cfg);
  } else {
    throw ConfigError("offset needs --data <csv> or --synthetic-rho0");
  }
  const OffsetCalibration c = offset_calibration_fit(data, current, cfg);
  std::ostringstream os;
  os << "[offset_calibration]\npoints = " << data.size() << "\ncurvature = " << fmt(c.a / units::um, 8)
     << " um/G^2\nexpected_curvature = " << fmt(c.expected_curvature / units::um, 8)
     << " um/G^2\ncurvature_ratio = " << fmt(c.curvature_ratio, 6)
     << "\ncompensating_field = " << fmt(c.vertex_field, 8) << " G\nvertex_position = "
     << fmt(c.vertex_position / units::um, 8) << " um\noffset_estimate = "
     << fmt(c.offset_estimate / units::um, 8) << " um\n";
  emit(a.common.out, os.str());
  return 0;
}

int run_analyze_fit(const AnalyzeArgs& a) {
  std::vector<double> x, y, e;
  for (const auto& row : read_csv(a.data)) {
    if (row.size() < 2) throw ConfigError("fit data needs x,y[,error] columns");
    x.push_back(kv::parse_number(row[0], "x"));
    y.push_back(kv::parse_number(row[1], "y"));
    if (row.size() > 2) e.push_back(kv::parse_number(row[2], "error"));
  }
  if (!e.empty() && e.size() != x.size()) throw ConfigError("error column must be complete");
  const GaussianFit g = fit_gaussian(x, y, e);
  std::ostringstream os;
  os << "[gaussian_fit]\namplitude = " << fmt(g.amplitude, 10) << "\namplitude_error = "
     << fmt(g.amplitude_error(), 4) << "\ncenter = " << fmt(g.center, 10) << "\ncenter_error = "
     << fmt(g.center_error(), 4) << "\nsigma = " << fmt(g.sigma, 10) << "\nsigma_error = "
     << fmt(g.sigma_error(), 4) << "\nchi2 = " << fmt(g.chi2, 6) << '\n';
  emit(a.common.out, os.str());
  return 0;
}

// ---------------------------------------------------------------------------

struct MottArgs {
  Common common;
  double diameter = 25e-6;
  double p_max = 0.843;
  double sigma_omega = 6.4e3;
  int loops = 2;
  double current = std::numeric_limits<double>::quiet_NaN();
};

int run_mott(const MottArgs& a) {
  const RunConfig rc = load_run_config(a.common.config);
  const double current = resolve_current(a.current, rc.apparatus.coil_current);
  const MottPlaneYield y = mott_plane_yield(a.diameter, {a.p_max, units::angular(a.sigma_omega)}, a.loops,
                                            current, rc.apparatus);
  std::ostringstream os;
  os << "[mott_plane]\natoms_in_plane = " << y.atoms_in_plane << "\nretained_atoms = " << fmt(y.retained_atoms)
     << "\nneighbor_plane_fraction = " << fmt(y.neighbor_plane_fraction) << "\ntotal_sites = " << y.total_sites
     << '\n';
  emit(a.common.out, os.str());
  return 0;
}

int dispatch(const std::vector<std::string>& args);

int run_replay(const std::string& manifest_path, const std::string& out) {
  RunManifest m = parse_manifest(read_text_file(manifest_path));
  std::vector<std::string> args = m.arguments;
  if (!out.empty()) {
    bool replaced = false;
    for (std::size_t i = 0; i + 1 < args.size(); ++i) {
      if (args[i] == "--out") {
        args[i + 1] = out;
        replaced = true;
      }
    }
    if (!replaced) {
      args.push_back("--out");
      args.push_back(out);
    }
  }
  return dispatch(args);
}

int dispatch(const std::vector<std::string>& args) {
  CLI::App app{"Frequency-selective addressing of atoms in a magnetic-gradient optical lattice"};
  app.require_subcommand(1);
  app.set_version_flag("--version", tool_version);

  CalibrateArgs cal;
  auto* c_cal = app.add_subcommand("calibrate", "gradient and unit report");
  add_common(c_cal, cal.common);
  c_cal->add_option("--current", cal.current, "coil current (A)");
  c_cal->add_flag("--exact-gamma", cal.exact_gamma, "use the exact Cs gyromagnetic ratio");

  SpectrumArgs spec;
  auto* c_spec = app.add_subcommand("spectrum", "pulse spectrum from the Bloch equations");
  add_common(c_spec, spec.common);
  c_spec->add_option("--shape", spec.shape, "gaussian or rectangular");
  c_spec->add_option("--sigma-t", spec.sigma_t, "Gaussian pulse width (s)");
  c_spec->add_option("--duration", spec.duration, "rectangular pi-pulse duration (s)");
  c_spec->add_option("--t2", spec.t2, "coherence time (s); 0 disables dephasing");
  c_spec->add_option("--loops", spec.loops, "inner-loop count M")->check(CLI::PositiveNumber);
  c_spec->add_flag("--position", spec.position, "express detuning in lattice sites");
  c_spec->add_option("--current", spec.current, "coil current (A)");

  PlanArgs plan;
  auto* c_plan = app.add_subcommand("plan", "pulse train for a target pattern");
  add_common(c_plan, plan.common);
  c_plan->add_option("--pattern", plan.pattern, "comma separated site list")->required();
  c_plan->add_option("--current", plan.current, "coil current (A)");
  c_plan->add_option("--sigma-t", plan.sigma_t, "Gaussian pulse width (s)");
  c_plan->add_option("--loops", plan.loops, "inner-loop count M")->check(CLI::PositiveNumber);
  c_plan->add_option("--p-max", plan.p_max, "single-loop P_max of the spectral model");
  c_plan->add_option("--sigma-omega", plan.sigma_omega, "single-loop sigma_omega/2pi (Hz)");

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Monte Carlo ensemble with imaging");
  add_common(c_sim, sim.common);
  c_sim->add_option("--plan", sim.plan, "sequence plan file")->required()->check(CLI::ExistingFile);
  c_sim->add_option("--shots", sim.shots, "number of shots")->check(CLI::PositiveNumber);
  c_sim->add_option("--rho0", sim.rho0, "radial offset (m)");
  c_sim->add_option("--drift", sim.drift, "lattice drift rate (m/s)");
  c_sim->add_option("--workers", sim.workers, "worker threads")->check(CLI::PositiveNumber);
  c_sim->add_option("--thermal", sim.thermal, "resampled, frozen or off");
  c_sim->add_flag("--no-images", sim.no_images, "skip image synthesis and pair analysis");
  c_sim->add_option("--bin-width", sim.bin_width, "histogram bin width (sites)");

  AnalyzeArgs an;
  auto* c_an = app.add_subcommand("analyze", "histograms, fits, deconvolution, spectra");
  c_an->require_subcommand(1);
  auto* a_hist = c_an->add_subcommand("histogram", "pair-distance histogram from positions.csv");
  add_common(a_hist, an.common);
  a_hist->add_option("--positions", an.positions, "positions.csv")->required()->check(CLI::ExistingFile);
  a_hist->add_option("--centers", an.centers, "pair centres in sites, comma separated")->required();
  a_hist->add_option("--window", an.window, "pairing half-window (sites)");
  a_hist->add_option("--bin-width", an.bin_width, "bin width (sites)");
  auto* a_conv = c_an->add_subcommand("convolve", "drift-broadened width");
  add_common(a_conv, an.common);
  a_conv->add_option("--sigma", an.sigma, "drift-free width (sites)")->required();
  auto* a_dec = c_an->add_subcommand("deconvolve", "drift-free width from a measured width");
  add_common(a_dec, an.common);
  a_dec->add_option("--sigma", an.sigma, "measured width (sites)")->required();
  auto* a_eff = c_an->add_subcommand("effective", "thermally averaged position-space spectrum");
  add_common(a_eff, an.common);
  a_eff->add_option("--rho0", an.rho0, "radial offset (m)");
  a_eff->add_option("--target-ratio", an.target_ratio, "infer rho0 from P_max / P_max(M)");
  a_eff->add_option("--p-max", an.p_max, "single-loop P_max");
  a_eff->add_option("--sigma-omega", an.sigma_omega, "single-loop sigma_omega/2pi (Hz)");
  a_eff->add_option("--loops", an.loops, "inner-loop count M")->check(CLI::PositiveNumber);
  a_eff->add_option("--current", an.current, "coil current (A)");
  auto* a_reg = c_an->add_subcommand("region", "addressed region boundary");
  add_common(a_reg, an.common);
  a_reg->add_option("--rho0", an.rho0, "radial offset (m)");
  a_reg->add_option("--sigma-omega", an.sigma_omega, "sigma_omega/2pi (Hz)");
  a_reg->add_option("--k", an.k, "threshold in sigma_omega")->check(CLI::IsMember({1, 2}));
  a_reg->add_option("--current", an.current, "coil current (A)");
  auto* a_off = c_an->add_subcommand("offset", "quadratic fit of an offset-field scan");
  add_common(a_off, an.common);
  a_off->add_option("--data", an.data, "csv with field_G,position_um")->check(CLI::ExistingFile);
  a_off->add_option("--synthetic-rho0", an.synthetic_rho0, "generate a scan for this offset (m)");
  a_off->add_option("--span", an.span, "synthetic scan half-span (G)");
  a_off->add_option("--points", an.points, "synthetic scan points")->check(CLI::Range(4, 10000));
  a_off->add_option("--current", an.current, "coil current (A)");
  auto* a_fit = c_an->add_subcommand("fit", "Gaussian fit of x,y[,error] data");
  add_common(a_fit, an.common);
  a_fit->add_option("--data", an.data, "csv file")->required()->check(CLI::ExistingFile);

  MottArgs mott;
  auto* c_mott = app.add_subcommand("mott-plane", "single-plane selection yield");
  add_common(c_mott, mott.common);
  c_mott->add_option("--diameter", mott.diameter, "cloud diameter (m)");
  c_mott->add_option("--p-max", mott.p_max, "single-loop P_max");
  c_mott->add_option("--sigma-omega", mott.sigma_omega, "single-loop sigma_omega/2pi (Hz)");
  c_mott->add_option("--loops", mott.loops, "inner-loop count M")->check(CLI::PositiveNumber);
  c_mott->add_option("--current", mott.current, "coil current (A)");

  std::string manifest, replay_out;
  auto* c_replay = app.add_subcommand("replay", "re-run the command recorded in a manifest");
  c_replay->add_option("manifest", manifest, "manifest.txt")->required()->check(CLI::ExistingFile);
  c_replay->add_option("--out", replay_out, "output directory override");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  if (c_cal->parsed()) return run_calibrate(cal);
  if (c_spec->parsed()) return run_spectrum(spec);
  if (c_plan->parsed()) return run_plan(plan);
  if (c_sim->parsed()) return run_simulate(sim, args);
  if (a_hist->parsed()) return run_analyze_histogram(an);
  if (a_conv->parsed()) return run_analyze_convolve(an);
  if (a_dec->parsed()) return run_analyze_deconvolve(an);
  if (a_eff->parsed()) return run_analyze_effective(an);
  if (a_reg->parsed()) return run_analyze_region(an);
  if (a_off->parsed()) return run_analyze_offset(an);
  if (a_fit->parsed()) return run_analyze_fit(an);
  if (c_mott->parsed()) return run_mott(mott);
  if (c_replay->parsed()) return run_replay(manifest, replay_out);
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    return dispatch(args);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
