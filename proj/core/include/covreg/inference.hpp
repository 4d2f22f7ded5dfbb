#ifndef COVREG_INFERENCE_HPP
#define COVREG_INFERENCE_HPP

#include <utility>
#include <vector>

#include "covreg/estimate.hpp"

namespace covreg {

/// Sandwich pieces and the assembled asymptotic variance of sqrt(np)(b - b0).
struct AvarEstimate {
  Matrix v_hat;      // K x K
  Matrix omega_hat;  // K x K kurtosis correction
  Matrix m_hat;      // K x K curvature (WLS only; 0 x 0 for QMLE)
  Matrix avar;       // K x K
  EstimatorKind estimator = EstimatorKind::QMLE;
};

struct ConfidenceInterval {
  double lower = 0.0;
  double upper = 0.0;
};

namespace inference {

/// Standardized residuals: row i is C_{beta}^{-1/2}(X_i) Y_i.
Matrix residuals(const Dataset& data, const ParamVector& beta_hat);

/// Sandwich estimate V^{-1} + V^{-1} Omega V^{-1} for the QMLE, with
///   A_i^(k) = 1/2 C^{-1/2} dC_k C^{-1/2},
///   V = (2/np) sum tr(A^(k1) A^(k2)),
///   Omega = (1/np) sum_j (eps_ij^4 - 3) A^(k1)_jj A^(k2)_jj.
AvarEstimate avar_qmle(const Dataset& data, const ParamVector& beta_hat);

/// Sandwich estimate M^{-1}(V + Omega)M^{-1} for a WLS fit with the given
/// per-observation weights; A_i^(k) = C^{1/2} sym(mat(W vec(dC_k))) C^{1/2}.
AvarEstimate avar_wls(const Dataset& data, const ParamVector& beta_hat,
                      const std::vector<Weight>& weights);

AvarEstimate avar_wls(const Dataset& data, const ParamVector& beta_hat,
                      const WeightSpec& weight);

/// Wald intervals beta_k -+ z_{(1+level)/2} sqrt(avar_kk / (np)).
std::vector<ConfidenceInterval> confint(const FitResult& fit,
                                        const AvarEstimate& avar, double level,
                                        int n, int p);

/// (S-Error, F-Error): max_i ||C_bhat(X_i) - C_b0(X_i)||_2 and
/// p^{-1/2} max_i ||.||_F over the observations.
std::pair<double, double> cov_errors(const Dataset& data,
                                     const ParamVector& beta_hat,
                                     const ParamVector& beta0);

/// Same, against explicitly supplied true covariance matrices (used when
/// the fitted family does not contain the truth).
std::pair<double, double> cov_errors_vs(const Dataset& data,
                                        const ParamVector& beta_hat,
                                        const std::vector<SymMatrix>& truth);

}  // namespace inference
}  // namespace covreg

#endif  // COVREG_INFERENCE_HPP
