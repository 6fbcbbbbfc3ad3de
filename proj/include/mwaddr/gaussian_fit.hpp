#pragma once

#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "least_squares.hpp"

namespace mwaddr {

/// Result of fitting a * exp(-(x - c)^2 / (2 s^2)).
struct GaussianFit {
  double amplitude = 0.0;
  double center = 0.0;
  double sigma = 0.0;
  Eigen::Matrix3d covariance = Eigen::Matrix3d::Zero();  // order: amplitude, center, sigma
  double chi2 = 0.0;

  double amplitude_error() const { return std::sqrt(covariance(0, 0)); }
  double center_error() const { return std::sqrt(covariance(1, 1)); }
  double sigma_error() const { return std::sqrt(covariance(2, 2)); }
};

/// Least-squares Gaussian fit, initialised from the sample moments.
///
/// `errors` optionally gives per-sample standard deviations; when empty every sample
/// carries unit weight and the covariance is scaled by the reduced chi^2.
inline GaussianFit fit_gaussian(std::span<const double> x, std::span<const double> y,
                                std::span<const double> errors = {}) {
  const auto n = static_cast<Eigen::Index>(x.size());
  if (x.size() != y.size() || (!errors.empty() && errors.size() != x.size())) {
    throw FitFailure("fit_gaussian: mismatched sample arrays");
  }
  if (n < 5) throw FitFailure("fit_gaussian: need at least 5 samples");

  double sum = 0.0, first = 0.0, peak = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = std::max(y[i], 0.0);
    sum += w;
    first += w * x[i];
    peak = std::max(peak, y[i]);
  }
  if (!(sum > 0.0)) throw FitFailure("fit_gaussian: no positive samples");
  const double mean = first / sum;
  double second = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = x[i] - mean;
    second += std::max(y[i], 0.0) * d * d;
  }
  double width = std::sqrt(second / sum);
  if (!(width > 0.0)) {
    // Single non-zero sample: start from the grid spacing.
    width = std::abs(x[n - 1] - x[0]) / static_cast<double>(n);
  }

  auto model = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
    const double a = p[0], c = p[1], s = p[2];
    for (Eigen::Index i = 0; i < n; ++i) {
      const double inv_err = errors.empty() ? 1.0 : 1.0 / errors[i];
      const double u = (x[i] - c) / s;
      const double g = std::exp(-0.5 * u * u);
      r[i] = (a * g - y[i]) * inv_err;
      if (jac) {
        (*jac)(i, 0) = g * inv_err;
        (*jac)(i, 1) = a * g * u / s * inv_err;
        (*jac)(i, 2) = a * g * u * u / s * inv_err;
      }
    }
  };

  Eigen::VectorXd p0(3);
  p0 << peak, mean, width;
  LmResult lm = levenberg_marquardt(model, p0, n);
  if (!lm.params.allFinite() || lm.params[2] == 0.0) {
    throw FitFailure("fit_gaussian: did not converge");
  }
  GaussianFit fit;
  fit.amplitude = lm.params[0];
  fit.center = lm.params[1];
  fit.sigma = std::abs(lm.params[2]);
  if (errors.empty()) {
    fit.covariance = lm.covariance;
  } else {
    // Absolute weights: no chi^2 rescaling.
    fit.covariance = lm.unscaled_covariance;
  }
  fit.chi2 = lm.chi2;
  if (!lm.converged) throw FitFailure("fit_gaussian: iteration limit reached");
  return fit;
}

inline GaussianFit fit_gaussian(const std::vector<double>& x, const std::vector<double>& y) {
  return fit_gaussian(std::span<const double>(x), std::span<const double>(y));
}

}  // namespace mwaddr
