#pragma once

#include <cmath>
#include <cstddef>
#include <limits>

#include <Eigen/Dense>

#include "errors.hpp"

namespace mwaddr {

struct LmOptions {
  int max_iterations = 500;
  double relative_tolerance = 1e-14;  // on chi^2 reduction and step size
  double initial_damping = 1e-3;
};

struct LmResult {
  Eigen::VectorXd params;
  Eigen::MatrixXd covariance;             // (J^T J)^-1 scaled by reduced chi^2
  Eigen::MatrixXd unscaled_covariance;    // (J^T J)^-1
  double chi2 = 0.0;
  std::ptrdiff_t dof = 0;
  int iterations = 0;
  bool converged = false;

  double reduced_chi2() const {
    return dof > 0 ? chi2 / static_cast<double>(dof) : std::numeric_limits<double>::quiet_NaN();
  }
};

/// Levenberg-Marquardt on weighted residuals.
///
/// `model(p, r, J)` fills the residual vector r (already divided by the per-point
/// uncertainty) and, when J is non-null, the Jacobian dr/dp.
template <class Model>
LmResult levenberg_marquardt(Model&& model, Eigen::VectorXd params, Eigen::Index n_residuals,
                             const LmOptions& opts = {}) {
  const Eigen::Index n_params = params.size();
  Eigen::VectorXd residual(n_residuals);
  Eigen::MatrixXd jacobian(n_residuals, n_params);
  Eigen::VectorXd trial_residual(n_residuals);

  model(params, residual, &jacobian);
  double chi2 = residual.squaredNorm();
  if (!std::isfinite(chi2)) throw FitFailure("non-finite residual at the initial point");

  double damping = opts.initial_damping;
  LmResult out;
  int it = 0;
  for (; it < opts.max_iterations; ++it) {
    const Eigen::MatrixXd jtj = jacobian.transpose() * jacobian;
    const Eigen::VectorXd grad = jacobian.transpose() * residual;
    bool improved = false;
    double step_norm = 0.0;
    double new_chi2 = chi2;
    for (int attempt = 0; attempt < 40; ++attempt) {
      Eigen::MatrixXd lhs = jtj;
      for (Eigen::Index i = 0; i < n_params; ++i) {
        lhs(i, i) += damping * std::max(jtj(i, i), 1e-300);
      }
      const Eigen::VectorXd step = lhs.ldlt().solve(-grad);
      if (!step.allFinite()) {
        damping *= 10.0;
        continue;
      }
      const Eigen::VectorXd trial = params + step;
      model(trial, trial_residual, nullptr);
      new_chi2 = trial_residual.squaredNorm();
      if (std::isfinite(new_chi2) && new_chi2 <= chi2) {
        step_norm = step.norm();
        params = trial;
        improved = true;
        damping = std::max(damping / 10.0, 1e-15);
        break;
      }
      damping *= 10.0;
    }
    if (!improved) {
      // No downhill step at any damping: already at the minimum to working precision.
      out.converged = true;
      break;
    }
    const double reduction = chi2 - new_chi2;
    chi2 = new_chi2;
    model(params, residual, &jacobian);
    if (reduction <= opts.relative_tolerance * std::max(chi2, 1e-300) ||
        step_norm <= opts.relative_tolerance * (params.norm() + opts.relative_tolerance)) {
      out.converged = true;
      break;
    }
  }
  out.iterations = it;
  out.params = params;
  out.chi2 = chi2;
  out.dof = n_residuals - n_params;
  const Eigen::MatrixXd jtj = jacobian.transpose() * jacobian;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(jtj);
  const double scale = out.dof > 0 ? chi2 / static_cast<double>(out.dof) : 1.0;
  if (lu.isInvertible()) {
    out.unscaled_covariance = lu.inverse();
  } else {
    out.unscaled_covariance = Eigen::MatrixXd::Constant(
        n_params, n_params, std::numeric_limits<double>::infinity());
  }
  out.covariance = out.unscaled_covariance * scale;
  return out;
}

}  // namespace mwaddr
