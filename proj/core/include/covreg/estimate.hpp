#ifndef COVREG_ESTIMATE_HPP
#define COVREG_ESTIMATE_HPP

#include <optional>
#include <string>
#include <vector>

#include "covreg/condvar.hpp"
#include "covreg/model.hpp"

namespace covreg {

enum class EstimatorKind { QMLE, OLS, GLS, FGLS, WLS };

std::string to_string(EstimatorKind kind);

struct FitOptions {
  int max_iters = 200;
  /// Convergence on the scaled gradient: ||score||_inf / (np) for QMLE,
  /// ||grad Tr||_inf for WLS.
  double grad_tol = 1e-8;
  /// Floor delta on min_i lambda_min(C_beta(X_i)) enforced by the feasible
  /// line search when constrain_pd is set.
  double constraint_floor = 1e-8;
  std::optional<ParamVector> start;  // empty = automatic
  bool constrain_pd = true;
  /// Bypass the linear-family closed form and minimize the objective
  /// numerically (validation hook).
  bool force_iterative = false;
  enum class OnNonconvergence { Throw, Return };
  OnNonconvergence on_nonconvergence = OnNonconvergence::Throw;
};

struct FitResult {
  ParamVector beta;
  EstimatorKind estimator = EstimatorKind::WLS;
  bool converged = false;
  int iters = 0;
  double objective = 0.0;  // log-likelihood for QMLE, Tr(beta) for WLS
  bool constrained_active = false;
  WeightSpec weight_used;
};

namespace estimate {

/// Gaussian log-likelihood of Eq.-(5) form:
///   -(np/2) log 2pi - 1/2 sum_i log det C - 1/2 sum_i Y_i' C^{-1} Y_i.
/// Throws NotPositiveDefinite naming the offending observation.
double loglik(const Dataset& data, const ParamVector& beta);

/// Quasi-score: component k is
///   1/2 sum_i [ Y_i' C^{-1} dC_k C^{-1} Y_i - tr(C^{-1} dC_k) ].
Vector score(const Dataset& data, const ParamVector& beta);

/// Weighted least squares objective
///   Tr(beta) = n^{-1} sum_i (Yv_i - Cv_i)' W(X_i) (Yv_i - Cv_i)
/// with Yv_i = vec(Y_i Y_i') and Cv_i = vec(C_beta(X_i)).
double wls_objective(const Dataset& data, const std::vector<Weight>& weights,
                     const ParamVector& beta);

/// Gradient of wls_objective with respect to beta.
Vector wls_gradient(const Dataset& data, const std::vector<Weight>& weights,
                    const ParamVector& beta);

/// Quasi-maximum likelihood fit by BFGS with a backtracking line search that
/// keeps every C_beta(X_i) positive definite (floored at constraint_floor
/// when constrain_pd is set).
FitResult fit_qmle(const Dataset& data, const FitOptions& opts = {});

/// Weighted least squares fit: exact normal equations for linear families,
/// quasi-Newton otherwise.  The same positive definiteness constraint as
/// fit_qmle applies when requested.
FitResult fit_wls(const Dataset& data, const WeightSpec& weight,
                  const FitOptions& opts = {});

/// fit_wls against weights that are already built, one per observation.
FitResult fit_wls_with_weights(const Dataset& data,
                               const std::vector<Weight>& weights,
                               const FitOptions& opts = {},
                               const WeightSpec& provenance = WeightSpec::identity());

FitResult fit_ols(const Dataset& data, const FitOptions& opts = {});

/// GLS with the true conditional covariance (simulation use: needs beta0 and
/// the true error moments).
FitResult fit_gls(const Dataset& data, const ParamVector& beta0,
                  const ErrorMoments& moments, const FitOptions& opts = {});

/// Feasible GLS: pilot OLS -> standardized residuals -> pooled mu4-hat ->
/// plug-in V-hat -> WLS with its pseudo-inverse as weight.
FitResult fit_fgls(const Dataset& data, const FitOptions& opts = {});

}  // namespace estimate
}  // namespace covreg

#endif  // COVREG_ESTIMATE_HPP
