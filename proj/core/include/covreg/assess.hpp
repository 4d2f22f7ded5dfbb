#ifndef COVREG_ASSESS_HPP
#define COVREG_ASSESS_HPP

#include <optional>
#include <vector>

#include "covreg/estimate.hpp"

namespace covreg {
namespace assess {

/// Per-observation K x K pieces of the weighted linear design:
///   G_i = X_i' W_i X_i   and   H_i = X_i' W_i V_i W_i X_i,
/// where X_i stacks the vectorized design matrices.  Everything the U
/// statistic and its leave-one-out variant need.
struct WeightedLinearData {
  int n = 0;
  int K = 0;
  std::vector<Matrix> g;  // per observation
  std::vector<Matrix> h;  // per observation
};

/// Builds the weighted design pieces.  v_source supplies V(X_i): the true
/// conditional covariance for the known-V statistics or a plug-in estimate
/// for the hatted variants.
WeightedLinearData prepare_weighted_design(
    const Dataset& data, const std::vector<Weight>& weights,
    const std::vector<condvar::CondCov>& v_source);

/// Training error: n^{-1} sum_i (Yv_i - Cv_i)' W_i (Yv_i - Cv_i).
double train_error(const Dataset& data, const std::vector<Weight>& weights,
                   const ParamVector& beta_hat);

/// Average loss of the fitted model over held-out pairs.
double test_error(const Dataset& test_data, const std::vector<Weight>& weights,
                  const ParamVector& beta_hat);

/// U statistic (2/n) tr{ (X~'X~)^{-1} X~' V~ X~ }; with W = V^- this equals
/// 2K/n exactly.
double u_stat(const WeightedLinearData& wd);

/// Leave-one-out estimate of the Random-X variance component:
///   n^{-1} sum_i tr{ G_{-i}^{-1} H_{-i} G_{-i}^{-1} G_i }.
double vtilde_err_r(const WeightedLinearData& wd);

struct AssessOptions {
  bool with_ocv = true;
  /// Rebuild an estimated weight inside each OCV fold instead of holding the
  /// full-data weight fixed.  Off by default: fixed weight keeps folds at
  /// closed-form cost.
  bool refit_weight_per_fold = false;
  FitOptions fold_fit;  // used for non-linear fold refits
};

/// Leave-one-out cross-validation error of the WLS fit,
///   n^{-1} sum_i || W_i^{1/2} (Yv_i - Cv_{beta(-i)}(X_i)) ||^2.
/// Linear families refit each fold by downdated normal equations; other
/// families rerun the quasi-Newton fit per fold.
double ocv(const Dataset& data, const std::vector<Weight>& weights,
           const AssessOptions& opts = {});

/// Builds the weights from a spec first.  With refit_weight_per_fold set and
/// an estimated-V spec, the pilot fit and plug-in weight are recomputed
/// inside every fold.
double ocv(const Dataset& data, const WeightSpec& spec,
           const AssessOptions& opts = {});

/// Everything at once for a fitted linear model.
struct AssessmentReport {
  double train_error = 0.0;
  double u = 0.0;
  double cp = 0.0;
  double vtilde_err_r = 0.0;
  double rcp = 0.0;
  std::optional<double> ocv;
  WeightSpec::Kind weight_kind = WeightSpec::Kind::Identity;
  bool estimated_v = false;  // hatted variants (V replaced by its estimate)
};

AssessmentReport assess_linear(const Dataset& data, const FitResult& fit,
                               const std::vector<Weight>& weights,
                               const std::vector<condvar::CondCov>& v_source,
                               bool estimated_v, const AssessOptions& opts = {});

}  // namespace assess
}  // namespace covreg

#endif  // COVREG_ASSESS_HPP
