#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include <mwaddr/gaussian_fit.hpp>
#include <mwaddr/pulse.hpp>

using namespace mwaddr;

namespace {
constexpr double kPi = 3.141592653589793;
constexpr double kTwoPi = 2.0 * kPi;
const double kInf = std::numeric_limits<double>::infinity();
}  // namespace

TEST(PulseDescriptor, GaussianAreaIsPiAfterTruncation) {
  for (double trunc : {2.0, 3.0, 4.0, 6.0}) {
    const auto p = PulseDescriptor::gaussian_pi(20e-6, trunc);
    EXPECT_NEAR(p.integrated_area(), kPi, 1e-9 * kPi);
    // Numerical area of the envelope (Simpson).
    const int n = 20000;
    const double a = p.start_time(), b = p.end_time(), h = (b - a) / n;
    double s = p.rabi(a) + p.rabi(b);
    for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * p.rabi(a + i * h);
    EXPECT_NEAR(s * h / 3.0, kPi, 1e-9);
  }
}

TEST(PulseDescriptor, ValidateRejectsNonPositiveDurations) {
  auto p = PulseDescriptor::rectangular_pi(kTwoPi * 60e3);
  p.duration = 0.0;
  EXPECT_THROW(p.validate(), ConfigError);
  auto g = PulseDescriptor::gaussian_pi(20e-6);
  g.sigma_t = -1.0;
  EXPECT_THROW(g.validate(), ConfigError);
}

TEST(RectTransfer, ResonantPiPulse) {
  const double rabi = kTwoPi * 60e3;
  EXPECT_NEAR(rect_transfer(0.0, rabi, kPi / rabi), 1.0, 1e-15);
}

TEST(RectTransfer, FirstGeneralisedRabiZero) {
  const double rabi = kTwoPi * 60e3;
  EXPECT_NEAR(rect_transfer(std::sqrt(3.0) * rabi, rabi, kPi / rabi), 0.0, 1e-15);
}

TEST(RectTransfer, SymmetricAndBounded) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> d(-1e6, 1e6), r(1e3, 1e6), t(0.0, 1e-4);
  for (int i = 0; i < 2000; ++i) {
    const double dd = d(rng), rr = r(rng), tt = t(rng);
    const double p = rect_transfer(dd, rr, tt);
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
    EXPECT_EQ(p, rect_transfer(-dd, rr, tt));
  }
}

TEST(RectTransfer, AgreesWithBlochAtTenMicroseconds) {
  const double rabi = kTwoPi * 60e3;
  const auto pulse = PulseDescriptor::rectangular(10e-6, rabi);
  EXPECT_NEAR(bloch_integrate(pulse, rabi, kInf), rect_transfer(rabi, rabi, 10e-6), 1e-6);
}

TEST(RectTransfer, AgreesWithBlochOverDetuningRange) {
  const double rabi = kTwoPi * 60e3;
  const auto pulse = PulseDescriptor::rectangular_pi(rabi);
  for (double x = -10.0; x <= 10.0; x += 0.25) {
    EXPECT_NEAR(bloch_integrate(pulse, x * rabi, kInf), rect_transfer(x * rabi, rabi, pulse.duration), 1e-6)
        << "delta/Omega = " << x;
  }
}

TEST(GaussianSpectrum, DefiningPoints) {
  const double s = kTwoPi * 6e3;
  EXPECT_EQ(gaussian_spectrum(0.0, s, 0.8), 0.8);
  EXPECT_NEAR(gaussian_spectrum(s, s, 0.8), 0.8 / std::sqrt(std::exp(1.0)), 1e-15);
  EXPECT_NEAR(gaussian_spectrum(2 * s, s, 1.0), std::exp(-2.0), 1e-15);
  EXPECT_NEAR(gaussian_spectrum(2 * s, s, 1.0), 0.135, 0.001);
}

TEST(Bloch, ResonantRectangularPiPulse) {
  const auto pulse = PulseDescriptor::rectangular_pi(kTwoPi * 60e3);
  EXPECT_NEAR(bloch_integrate(pulse, 0.0, kInf), 1.0, 1e-8);
}

TEST(Bloch, NormPreservedWithoutDecay) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> det(-kTwoPi * 50e3, kTwoPi * 50e3), st(5e-6, 30e-6);
  for (int i = 0; i < 20; ++i) {
    const auto g = PulseDescriptor::gaussian_pi(st(rng));
    EXPECT_LE(bloch_evolve(g, det(rng), kInf).max_norm_defect, 1e-8);
    const auto r = PulseDescriptor::rectangular(st(rng), kTwoPi * 60e3);
    EXPECT_LE(bloch_evolve(r, det(rng), kInf).max_norm_defect, 1e-8);
  }
}

TEST(Bloch, ProbabilitiesBoundedProperty) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> det(-kTwoPi * 100e3, kTwoPi * 100e3), st(2e-6, 40e-6),
      area(0.1, 3.0 * kPi), t2(20e-6, 1e-3);
  for (int i = 0; i < 30; ++i) {
    const auto g = PulseDescriptor::gaussian(st(rng), area(rng));
    const double p = bloch_integrate(g, det(rng), t2(rng));
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
  }
}

TEST(Bloch, DecoherenceLowersResonantTransfer) {
  const auto g = PulseDescriptor::gaussian_pi(20e-6);
  const double ideal = bloch_integrate(g, 0.0, kInf);
  const double damped = bloch_integrate(g, 0.0, 200e-6);
  EXPECT_NEAR(ideal, 1.0, 1e-7);
  EXPECT_LT(damped, ideal);
  // Weak dephasing: the transfer loss is of order (pulse length) / T2.
  EXPECT_GT(damped, 0.85);
}

TEST(Bloch, SpectrumIsEven) {
  const auto g = PulseDescriptor::gaussian_pi(15e-6);
  for (double d : {1e3, 2e4, 5e4, 1.3e5}) {
    EXPECT_NEAR(bloch_integrate(g, d, 200e-6), bloch_integrate(g, -d, 200e-6), 1e-8);
  }
}

TEST(Bloch, GaussianPulseWidthMatchesIndependentSolver) {
  // Reference from an independent DOP853 integration of the Schroedinger equation
  // (rtol 1e-10) and a least-squares Gaussian fit over +/-6 sigma: 5290.14 Hz.
  const auto g = PulseDescriptor::gaussian_pi(20e-6);
  const Spectrum s = bloch_spectrum(g, kInf);
  EXPECT_NEAR(units::cyclic(*s.fitted_sigma), 5290.14, 2.0);
  EXPECT_NEAR(*s.fitted_p_max, 1.0026, 5e-4);
}

TEST(Bloch, GaussianPulseWidthInExpectedWindow) {
  const auto g = PulseDescriptor::gaussian_pi(20e-6);
  const Spectrum s = bloch_spectrum(g, kInf);
  const double sigma_khz = units::cyclic(*s.fitted_sigma) / 1e3;
  EXPECT_GE(sigma_khz, 5.5);
  EXPECT_LE(sigma_khz, 7.0);
}

TEST(Spectrum, GridAndValidity) {
  const auto grid = detuning_grid(2.0);
  EXPECT_EQ(grid.size(), 301u);
  EXPECT_DOUBLE_EQ(grid.front(), -12.0);
  EXPECT_DOUBLE_EQ(grid.back(), 12.0);
  const Spectrum s = sample_spectrum(grid, [](double d) { return gaussian_spectrum(d, 2.0, 0.9); });
  EXPECT_TRUE(s.valid());
  EXPECT_NEAR(*s.fitted_p_max, 0.9, 1e-9);
  EXPECT_NEAR(*s.fitted_sigma, 2.0, 1e-9);
}

TEST(ComposeLoops, IdentityForOneLoop) {
  const Spectrum s = sample_spectrum(detuning_grid(1.0), [](double d) { return gaussian_spectrum(d, 1.0, 0.7); });
  const Spectrum c = compose_loops(s, 1);
  ASSERT_EQ(c.samples.size(), s.samples.size());
  for (std::size_t i = 0; i < s.samples.size(); ++i) EXPECT_EQ(c.samples[i].transfer, s.samples[i].transfer);
}

TEST(ComposeLoops, PaperTwoLoopValue) {
  const double sigma = kTwoPi * 6.4e3;
  const Spectrum s = sample_spectrum(detuning_grid(sigma), [&](double d) { return gaussian_spectrum(d, sigma, 0.843); });
  const Spectrum c = compose_loops(s, 2);
  EXPECT_NEAR(*c.fitted_p_max, 0.711, 0.001);
  EXPECT_NEAR(*c.fitted_sigma, sigma / std::sqrt(2.0), 1e-6 * sigma);
}

TEST(ComposeLoops, FourLoopArithmetic) {
  const double sigma = 3.7;
  const Spectrum s = sample_spectrum(detuning_grid(sigma), [&](double d) { return gaussian_spectrum(d, sigma, 0.9); });
  const Spectrum c = compose_loops(s, 4);
  EXPECT_NEAR(*c.fitted_p_max, 0.6561, 1e-9);
  EXPECT_NEAR(*c.fitted_sigma, sigma / 2.0, 1e-9);
}

TEST(ComposeLoops, LogPeakLinearAndWidthScaling) {
  const double sigma = kTwoPi * 6.4e3;
  const Spectrum s = sample_spectrum(detuning_grid(sigma), [&](double d) { return gaussian_spectrum(d, sigma, 0.843); });
  for (int m = 1; m <= 5; ++m) {
    const Spectrum c = compose_loops(s, m);
    EXPECT_NEAR(std::log(*c.fitted_p_max), m * std::log(0.843), 1e-9);
    EXPECT_NEAR(*c.fitted_sigma * *c.fitted_sigma * m, sigma * sigma, 1e-8 * sigma * sigma);
  }
  EXPECT_THROW(compose_loops(s, 0), ConfigError);
}

TEST(GaussianModel, ComposeMatchesEquation) {
  const GaussianModel g{0.843, 10.0};
  const GaussianModel m = g.compose(3);
  EXPECT_DOUBLE_EQ(m.p_max, 0.843 * 0.843 * 0.843);
  EXPECT_DOUBLE_EQ(m.sigma_omega, 10.0 / std::sqrt(3.0));
}

TEST(Spectrum, CsvHasHeaderAndPrecision) {
  Spectrum s;
  s.samples = {{kTwoPi * 1000.0, 0.123456789012345}, {kTwoPi * 2000.0, 0.5}};
  std::ostringstream os;
  write_spectrum_csv(os, s);
  EXPECT_EQ(os.str(), "detuning_hz,transfer\n1000,0.123456789012345\n2000,0.5\n");
}

TEST(GaussianFit, ExactSamplesRecovered) {
  std::vector<double> x, y;
  for (int i = -40; i <= 40; ++i) {
    x.push_back(0.1 * i);
    y.push_back(2.5 * std::exp(-0.5 * std::pow((0.1 * i - 0.3) / 0.7, 2)));
  }
  const GaussianFit f = fit_gaussian(x, y);
  EXPECT_NEAR(f.amplitude, 2.5, 1e-8);
  EXPECT_NEAR(f.center, 0.3, 1e-8);
  EXPECT_NEAR(f.sigma, 0.7, 1e-8);
}

TEST(GaussianFit, NoisySamplesWithinThreeSigma) {
  std::mt19937_64 rng(42);
  int inside = 0;
  const int trials = 40;
  for (int t = 0; t < trials; ++t) {
    std::normal_distribution<double> noise(0.0, 0.1);  // SNR 10 at the peak
    std::vector<double> x, y, e;
    for (int i = -30; i <= 30; ++i) {
      x.push_back(0.1 * i);
      y.push_back(std::exp(-0.5 * std::pow(0.1 * i / 0.8, 2)) + noise(rng));
      e.push_back(0.1);
    }
    const GaussianFit f = fit_gaussian(x, y, e);
    const bool ok = std::abs(f.amplitude - 1.0) < 3 * f.amplitude_error() &&
                    std::abs(f.center) < 3 * f.center_error() &&
                    std::abs(f.sigma - 0.8) < 3 * f.sigma_error();
    inside += ok ? 1 : 0;
  }
  EXPECT_GE(inside, trials - 3);
}

TEST(GaussianFit, RejectsTooFewSamples) {
  const std::vector<double> x{0, 1, 2, 3}, y{0, 1, 1, 0};
  EXPECT_THROW(fit_gaussian(x, y), FitFailure);
}
