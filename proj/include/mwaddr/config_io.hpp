#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "imaging.hpp"
#include "kvdoc.hpp"
#include "physics.hpp"
#include "planner.hpp"
#include "simulation.hpp"

// Configuration files.
//
//   [apparatus]   ApparatusConfig
//   [simulation]  ShotConfig without the plan
//   [imaging]     ImagingConfig
//
// Plan files hold [plan], [pushout], an optional [spectral_model] and one [pulse.N]
// section per pulse in train order. Every section and key is optional on input; an empty
// document yields the built-in defaults. Unknown sections or keys are rejected.
namespace mwaddr {

inline constexpr const char* tool_version = "0.1.0";

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace detail {

using kv::Dimension;

inline void reject_unknown_sections(const kv::Document& doc, std::initializer_list<std::string_view> known,
                                    std::string_view prefix = {}) {
  for (const auto& s : doc.sections) {
    bool ok = std::find(known.begin(), known.end(), s.name) != known.end();
    if (!ok && !prefix.empty() && s.name.rfind(prefix, 0) == 0) ok = true;
    if (!ok) throw ConfigError("unknown section [" + s.name + "]");
  }
}

inline GyromagneticModel parse_gyromagnetic(const std::string& v) {
  if (v == "rounded") return GyromagneticModel::rounded;
  if (v == "exact_cs") return GyromagneticModel::exact_cs;
  throw ConfigError("gyromagnetic must be 'rounded' or 'exact_cs', got '" + v + "'");
}

inline ThermalMode parse_thermal(const std::string& v) {
  if (v == "resampled") return ThermalMode::resampled;
  if (v == "frozen") return ThermalMode::frozen;
  if (v == "off") return ThermalMode::off;
  throw ConfigError("thermal must be 'resampled', 'frozen' or 'off', got '" + v + "'");
}

inline bool parse_bool(const std::string& v, std::string_view key) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("'" + std::string(key) + "' must be true or false");
}

inline std::string q(double v, Dimension d) { return kv::format_quantity(v, d); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Apparatus, simulation and imaging

inline ApparatusConfig read_apparatus(const kv::Section* s, ApparatusConfig c = {}) {
  using D = kv::Dimension;
  kv::SectionReader r(s);
  r.quantity("lattice_wavelength", D::length, c.lattice_wavelength);
  r.quantity("guiding_field", D::field, c.guiding_field);
  r.quantity("gradient_slope", D::gradient_slope, c.gradient_slope);
  r.with("gyromagnetic", [&](const std::string& v) { c.gyromagnetic = detail::parse_gyromagnetic(v); });
  r.quantity("coil_current", D::current, c.coil_current);
  r.quantity("radial_offset", D::length, c.radial_offset);
  r.quantity("axial_offset", D::length, c.axial_offset);
  r.quantity("trap_freq_axial", D::angular_frequency, c.trap_freq_axial);
  r.quantity("trap_freq_radial", D::angular_frequency, c.trap_freq_radial);
  r.quantity("temperature", D::temperature, c.temperature);
  r.quantity("mean_occupation_axial", D::dimensionless, c.mean_occupation_axial);
  r.quantity("mean_occupation_radial", D::dimensionless, c.mean_occupation_radial);
  r.quantity("rabi_peak", D::angular_frequency, c.rabi_peak);
  r.quantity("t2", D::time, c.t2);
  r.quantity("pushout_survival_f4", D::dimensionless, c.pushout_survival_f4);
  r.quantity("pushout_survival_f3", D::dimensionless, c.pushout_survival_f3);
  r.quantity("atom_mass", D::mass, c.atom_mass);
  r.quantity("validity_factor", D::dimensionless, c.validity_factor);
  r.finish();
  c.validate();
  return c;
}

inline void write_apparatus(kv::Section& s, const ApparatusConfig& c) {
  using D = kv::Dimension;
  using detail::q;
  s.set("lattice_wavelength", q(c.lattice_wavelength, D::length));
  s.set("guiding_field", q(c.guiding_field, D::field));
  s.set("gradient_slope", q(c.gradient_slope, D::gradient_slope));
  s.set("gyromagnetic", c.gyromagnetic == GyromagneticModel::rounded ? "rounded" : "exact_cs");
  s.set("coil_current", q(c.coil_current, D::current));
  s.set("radial_offset", q(c.radial_offset, D::length));
  s.set("axial_offset", q(c.axial_offset, D::length));
  s.set("trap_freq_axial", q(c.trap_freq_axial, D::angular_frequency));
  s.set("trap_freq_radial", q(c.trap_freq_radial, D::angular_frequency));
  s.set("temperature", q(c.temperature, D::temperature));
  s.set("mean_occupation_axial", q(c.mean_occupation_axial, D::dimensionless));
  s.set("mean_occupation_radial", q(c.mean_occupation_radial, D::dimensionless));
  s.set("rabi_peak", q(c.rabi_peak, D::angular_frequency));
  s.set("t2", q(c.t2, D::time));
  s.set("pushout_survival_f4", q(c.pushout_survival_f4, D::dimensionless));
  s.set("pushout_survival_f3", q(c.pushout_survival_f3, D::dimensionless));
  s.set("atom_mass", q(c.atom_mass, D::mass));
  s.set("validity_factor", q(c.validity_factor, D::dimensionless));
}

/// Reads [simulation] into everything except the plan.
inline ShotConfig read_simulation(const kv::Section* s, ShotConfig c = {}) {
  using D = kv::Dimension;
  kv::SectionReader r(s);
  r.integer("lattice_extent", c.lattice_extent);
  r.quantity("p_a", D::dimensionless, c.p_a);
  r.quantity("drift_rate", D::velocity, c.drift_rate);
  r.quantity("shot_interval", D::time, c.shot_interval);
  r.integer("reference_site", c.reference_site);
  unsigned long long seed = c.seed;
  r.unsigned64("seed", seed);
  c.seed = seed;
  r.with("thermal", [&](const std::string& v) { c.thermal = detail::parse_thermal(v); });
  r.finish();
  c.validate();
  return c;
}

inline void write_simulation(kv::Section& s, const ShotConfig& c) {
  using D = kv::Dimension;
  using detail::q;
  s.set("lattice_extent", std::to_string(c.lattice_extent));
  s.set("p_a", q(c.p_a, D::dimensionless));
  s.set("drift_rate", q(c.drift_rate, D::velocity));
  s.set("shot_interval", q(c.shot_interval, D::time));
  s.set("reference_site", std::to_string(c.reference_site));
  s.set("seed", std::to_string(c.seed));
  s.set("thermal", to_string(c.thermal));
}

inline ImagingConfig read_imaging(const kv::Section* s, ImagingConfig c = {}) {
  using D = kv::Dimension;
  kv::SectionReader r(s);
  r.quantity("psf_fwhm", D::length, c.psf_fwhm);
  r.quantity("pixel_size", D::length, c.pixel_size);
  r.quantity("photons_per_atom", D::dimensionless, c.photons_per_atom);
  r.quantity("background_rate", D::dimensionless, c.background_rate);
  r.integer("rows", c.rows);
  r.integer("margin_sites", c.margin_sites);
  r.with("noiseless", [&](const std::string& v) { c.noiseless = detail::parse_bool(v, "noiseless"); });
  r.finish();
  c.validate();
  return c;
}

inline void write_imaging(kv::Section& s, const ImagingConfig& c) {
  using D = kv::Dimension;
  using detail::q;
  s.set("psf_fwhm", q(c.psf_fwhm, D::length));
  s.set("pixel_size", q(c.pixel_size, D::length));
  s.set("photons_per_atom", q(c.photons_per_atom, D::dimensionless));
  s.set("background_rate", q(c.background_rate, D::dimensionless));
  s.set("rows", std::to_string(c.rows));
  s.set("margin_sites", std::to_string(c.margin_sites));
  s.set("noiseless", c.noiseless ? "true" : "false");
}

/// Everything a configuration file can set.
struct RunConfig {
  ApparatusConfig apparatus;
  ShotConfig simulation;
  ImagingConfig imaging;
};

inline RunConfig parse_run_config(std::string_view text) {
  const kv::Document doc = kv::parse(text);
  detail::reject_unknown_sections(doc, {"apparatus", "simulation", "imaging"});
  RunConfig rc;
  rc.apparatus = read_apparatus(doc.find("apparatus"));
  rc.simulation = read_simulation(doc.find("simulation"));
  rc.imaging = read_imaging(doc.find("imaging"));
  return rc;
}

inline std::string serialize_run_config(const RunConfig& rc) {
  kv::Document doc;
  write_apparatus(doc.section("apparatus"), rc.apparatus);
  write_simulation(doc.section("simulation"), rc.simulation);
  write_imaging(doc.section("imaging"), rc.imaging);
  return kv::serialize(doc);
}

inline RunConfig load_run_config(const std::string& path) {
  if (path.empty()) return {};
  return parse_run_config(read_text_file(path));
}

// ---------------------------------------------------------------------------
// Sequence plans

inline SequencePlan parse_plan(std::string_view text) {
  using D = kv::Dimension;
  const kv::Document doc = kv::parse(text);
  detail::reject_unknown_sections(doc, {"plan", "pushout", "spectral_model"}, "pulse.");
  SequencePlan plan;
  {
    kv::SectionReader r(doc.find("plan"));
    long loops = plan.loop_count;
    r.integer("loop_count", loops);
    plan.loop_count = static_cast<int>(loops);
    r.quantity("current", D::current, plan.current);
    r.quantity("init_efficiency", D::dimensionless, plan.init_efficiency);
    unsigned long long seed = plan.seed;
    r.unsigned64("seed", seed);
    plan.seed = seed;
    long pulses = -1;
    r.integer("pulses", pulses);
    r.finish();
    long found = 0;
    for (const auto& s : doc.sections) found += s.name.rfind("pulse.", 0) == 0 ? 1 : 0;
    if (pulses >= 0 && pulses != found) {
      throw ConfigError("plan declares " + std::to_string(pulses) + " pulses but has " +
                        std::to_string(found) + " [pulse.N] sections");
    }
  }
  {
    kv::SectionReader r(doc.find("pushout"));
    r.quantity("survival_f4", D::dimensionless, plan.pushout_survival_f4);
    r.quantity("survival_f3", D::dimensionless, plan.pushout_survival_f3);
    r.finish();
  }
  if (const kv::Section* s = doc.find("spectral_model")) {
    kv::SectionReader r(s);
    GaussianModel m;
    m.sigma_omega = -1.0;
    r.quantity("p_max", D::dimensionless, m.p_max);
    r.quantity("sigma_omega", D::angular_frequency, m.sigma_omega);
    r.finish();
    plan.spectral_model = m;
  }
  for (std::size_t i = 0;; ++i) {
    const kv::Section* s = doc.find("pulse." + std::to_string(i));
    if (!s) break;
    PulseDescriptor p;
    kv::SectionReader r(s);
    std::string shape = "gaussian";
    r.text("shape", shape);
    if (shape == "gaussian") {
      p.shape = PulseShape::gaussian;
    } else if (shape == "rectangular") {
      p.shape = PulseShape::rectangular;
    } else {
      throw ConfigError("pulse shape must be 'gaussian' or 'rectangular', got '" + shape + "'");
    }
    r.quantity("duration", D::time, p.duration);
    r.quantity("sigma_t", D::time, p.sigma_t);
    r.quantity("truncation", D::dimensionless, p.truncation);
    r.quantity("frequency_offset", D::angular_frequency, p.frequency_offset);
    r.quantity("peak_rabi", D::angular_frequency, p.peak_rabi);
    r.quantity("area", D::dimensionless, p.area);
    r.finish();
    plan.train.push_back(p);
  }
  for (const auto& s : doc.sections) {
    if (s.name.rfind("pulse.", 0) != 0) continue;
    const std::string idx = s.name.substr(6);
    const bool digits = !idx.empty() && std::all_of(idx.begin(), idx.end(), [](char ch) {
      return ch >= '0' && ch <= '9';
    });
    if (!digits || std::stoul(idx) >= plan.train.size()) {
      throw ConfigError("pulse sections must be numbered consecutively from 0: [" + s.name + "]");
    }
  }
  return plan;
}

inline std::string serialize_plan(const SequencePlan& plan) {
  using D = kv::Dimension;
  using detail::q;
  kv::Document doc;
  auto& p = doc.section("plan");
  p.set("loop_count", std::to_string(plan.loop_count));
  p.set("current", q(plan.current, D::current));
  p.set("init_efficiency", q(plan.init_efficiency, D::dimensionless));
  p.set("seed", std::to_string(plan.seed));
  p.set("pulses", std::to_string(plan.train.size()));
  auto& po = doc.section("pushout");
  po.set("survival_f4", q(plan.pushout_survival_f4, D::dimensionless));
  po.set("survival_f3", q(plan.pushout_survival_f3, D::dimensionless));
  if (plan.spectral_model) {
    auto& m = doc.section("spectral_model");
    m.set("p_max", q(plan.spectral_model->p_max, D::dimensionless));
    m.set("sigma_omega", q(plan.spectral_model->sigma_omega, D::angular_frequency));
  }
  for (std::size_t i = 0; i < plan.train.size(); ++i) {
    const auto& pulse = plan.train[i];
    auto& s = doc.section("pulse." + std::to_string(i));
    s.set("shape", to_string(pulse.shape));
    if (pulse.shape == PulseShape::rectangular) {
      s.set("duration", q(pulse.duration, D::time));
    } else {
      s.set("sigma_t", q(pulse.sigma_t, D::time));
      s.set("truncation", q(pulse.truncation, D::dimensionless));
    }
    s.set("frequency_offset", q(pulse.frequency_offset, D::angular_frequency));
    s.set("peak_rabi", q(pulse.peak_rabi, D::angular_frequency));
    s.set("area", q(pulse.area, D::dimensionless));
  }
  return kv::serialize(doc);
}

inline SequencePlan load_plan(const std::string& path) { return parse_plan(read_text_file(path)); }

// ---------------------------------------------------------------------------
// Run manifests

struct RunManifest {
  std::string command;
  std::string config_path;
  std::uint64_t seed = 0;
  std::string output_dir;
  std::string version = tool_version;
  std::string timestamp;
  std::vector<std::string> arguments;  // argv after the program name
};

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string serialize_manifest(const RunManifest& m) {
  kv::Document doc;
  auto& s = doc.section("run");
  s.set("command", m.command);
  s.set("config", m.config_path);
  s.set("seed", std::to_string(m.seed));
  s.set("output_dir", m.output_dir);
  s.set("version", m.version);
  s.set("timestamp", m.timestamp);
  auto& a = doc.section("arguments");
  a.set("count", std::to_string(m.arguments.size()));
  for (std::size_t i = 0; i < m.arguments.size(); ++i) a.set("arg." + std::to_string(i), m.arguments[i]);
  return kv::serialize(doc);
}

inline RunManifest parse_manifest(std::string_view text) {
  const kv::Document doc = kv::parse(text);
  detail::reject_unknown_sections(doc, {"run", "arguments"});
  RunManifest m;
  kv::SectionReader r(doc.find("run"));
  r.text("command", m.command);
  r.text("config", m.config_path);
  unsigned long long seed = 0;
  r.unsigned64("seed", seed);
  m.seed = seed;
  r.text("output_dir", m.output_dir);
  r.text("version", m.version);
  r.text("timestamp", m.timestamp);
  r.finish();
  kv::SectionReader a(doc.find("arguments"));
  long count = 0;
  a.integer("count", count);
  for (long i = 0; i < count; ++i) {
    std::string v;
    bool seen = false;
    a.with("arg." + std::to_string(i), [&](const std::string& s) {
      v = s;
      seen = true;
    });
    if (!seen) throw ConfigError("manifest is missing arg." + std::to_string(i));
    m.arguments.push_back(v);
  }
  a.finish();
  return m;
}

}  // namespace mwaddr
