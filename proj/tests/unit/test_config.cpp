#include <gtest/gtest.h>

#include <mwaddr/config_io.hpp>
#include <mwaddr/planner.hpp>

using namespace mwaddr;

namespace {
constexpr double kTwoPi = 6.283185307179586;

template <class Fn>
std::string config_error_message(Fn&& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}
}  // namespace

TEST(KvDocument, ParsesSectionsAndComments) {
  const kv::Document doc = kv::parse("# comment\n[a]\nx = 1\n\n[b]\ny = two words\n");
  ASSERT_EQ(doc.sections.size(), 2u);
  ASSERT_NE(doc.find("b"), nullptr);
  EXPECT_EQ(doc.find("b")->entries[0].value, "two words");
  EXPECT_EQ(doc.find("c"), nullptr);
}

TEST(KvDocument, UnitsAreConverted) {
  using D = kv::Dimension;
  EXPECT_DOUBLE_EQ(kv::parse_quantity("10 nm/s", D::velocity, "drift_rate"), 10e-9);
  EXPECT_DOUBLE_EQ(kv::parse_quantity("866 nm", D::length, "x"), 866e-9);
  EXPECT_DOUBLE_EQ(kv::parse_quantity("6.4 kHz", D::angular_frequency, "x"), kTwoPi * 6.4e3);
  EXPECT_DOUBLE_EQ(kv::parse_quantity("3", D::field, "x"), 3.0);
  EXPECT_THROW(kv::parse_quantity("3 parsecs", D::length, "x"), ConfigError);
  EXPECT_THROW(kv::parse_quantity("3 s", D::length, "x"), ConfigError);
  EXPECT_THROW(kv::parse_quantity("abc", D::length, "x"), ConfigError);
}

TEST(RunConfig, EmptyConfigGivesDefaults) {
  const RunConfig rc = parse_run_config("");
  EXPECT_EQ(rc.apparatus.lattice_wavelength, 866e-9);
  EXPECT_EQ(rc.apparatus.coil_current, 45.0);
  EXPECT_EQ(rc.simulation.lattice_extent, 200);
  EXPECT_EQ(rc.simulation.p_a, 0.5);
  EXPECT_EQ(rc.imaging.psf_fwhm, 1.8e-6);
}

TEST(RunConfig, RoundTripIsIdentity) {
  RunConfig rc;
  rc.apparatus.radial_offset = 64e-6;
  rc.apparatus.gyromagnetic = GyromagneticModel::exact_cs;
  rc.apparatus.trap_freq_radial = kTwoPi * 1.234567e3;
  rc.apparatus.t2 = 1.0 / 3.0 * 1e-3;
  rc.simulation.drift_rate = 12.5e-9;
  rc.simulation.seed = 18446744073709551615ULL;
  rc.simulation.thermal = ThermalMode::frozen;
  rc.imaging.photons_per_atom = 321.5;
  rc.imaging.noiseless = true;
  const std::string text = serialize_run_config(rc);
  const RunConfig back = parse_run_config(text);
  EXPECT_EQ(serialize_run_config(back), text);
  EXPECT_EQ(back.apparatus.radial_offset, rc.apparatus.radial_offset);
  EXPECT_EQ(back.apparatus.trap_freq_radial, rc.apparatus.trap_freq_radial);
  EXPECT_EQ(back.apparatus.t2, rc.apparatus.t2);
  EXPECT_EQ(back.simulation.seed, rc.simulation.seed);
  EXPECT_EQ(back.simulation.thermal, ThermalMode::frozen);
  EXPECT_EQ(back.imaging.noiseless, true);
}

TEST(RunConfig, UnknownKeyIsNamed) {
  const std::string msg = config_error_message([] { parse_run_config("[apparatus]\ncoil_curent = 45 A\n"); });
  EXPECT_NE(msg.find("coil_curent"), std::string::npos) << msg;
}

TEST(RunConfig, UnknownSectionIsNamed) {
  const std::string msg = config_error_message([] { parse_run_config("[aparatus]\n"); });
  EXPECT_NE(msg.find("aparatus"), std::string::npos) << msg;
}

TEST(RunConfig, InvalidValuesRejected) {
  EXPECT_THROW(parse_run_config("[simulation]\np_a = 2\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[apparatus]\nguiding_field = 0 G\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[simulation]\nthermal = warm\n"), ConfigError);
}

TEST(Plan, RoundTripIsIdentity) {
  const ApparatusConfig cfg;
  SequencePlan plan = make_plan(TargetPattern::parse("0,2,16,18,32,34"), 45.0, PulseDescriptor::gaussian_pi(20e-6),
                                2, cfg, GaussianModel{0.843, kTwoPi * 6.4e3})
                          .plan;
  plan.seed = 42;
  const std::string text = serialize_plan(plan);
  const SequencePlan back = parse_plan(text);
  EXPECT_EQ(serialize_plan(back), text);
  ASSERT_EQ(back.train.size(), plan.train.size());
  for (std::size_t i = 0; i < plan.train.size(); ++i) {
    EXPECT_EQ(back.train[i].frequency_offset, plan.train[i].frequency_offset);
    EXPECT_EQ(back.train[i].peak_rabi, plan.train[i].peak_rabi);
  }
  EXPECT_EQ(back.spectral_model->sigma_omega, plan.spectral_model->sigma_omega);
  EXPECT_NO_THROW(back.validate(cfg));
}

TEST(Plan, FrequenciesWrittenInHertz) {
  SequencePlan plan;
  plan.train = {PulseDescriptor::rectangular_pi(kTwoPi * 60e3)};
  const std::string text = serialize_plan(plan);
  EXPECT_NE(text.find("peak_rabi = 60000 Hz"), std::string::npos) << text;
}

TEST(Plan, RejectsGapsAndUnknownKeys) {
  EXPECT_THROW(parse_plan("[plan]\nloop_count = 1\n[pulse.1]\nsigma_t = 20 us\n"), ConfigError);
  EXPECT_THROW(parse_plan("[plan]\npulses = 2\n[pulse.0]\nsigma_t = 20 us\n"), ConfigError);
  const std::string msg = config_error_message([] { parse_plan("[pulse.0]\nsigma = 20 us\n"); });
  EXPECT_NE(msg.find("sigma"), std::string::npos) << msg;
  EXPECT_THROW(parse_plan("[pulse.0]\nshape = triangle\n"), ConfigError);
}

TEST(Manifest, RoundTrip) {
  RunManifest m;
  m.command = "simulate";
  m.config_path = "run.cfg";
  m.seed = 7;
  m.output_dir = "out dir";
  m.timestamp = "2026-01-01T00:00:00Z";
  m.arguments = {"simulate", "--seed", "7", "--out", "out dir"};
  const RunManifest back = parse_manifest(serialize_manifest(m));
  EXPECT_EQ(back.command, m.command);
  EXPECT_EQ(back.config_path, m.config_path);
  EXPECT_EQ(back.seed, m.seed);
  EXPECT_EQ(back.output_dir, m.output_dir);
  EXPECT_EQ(back.version, m.version);
  EXPECT_EQ(back.timestamp, m.timestamp);
  EXPECT_EQ(back.arguments, m.arguments);
  EXPECT_THROW(parse_manifest("[run]\nextra = 1\n"), ConfigError);
}
