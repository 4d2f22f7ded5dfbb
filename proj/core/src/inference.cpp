#include "covreg/inference.hpp"

#include <cmath>
#include <limits>

namespace covreg {
namespace inference {

namespace {

constexpr double kConditionLimit = 1e12;

Matrix inverse_via_eigen(const Matrix& m, const char* which) {
  // Equilibrated condition check: flag genuine rank deficiency, not scale
  // imbalance between components.
  const Eigen::Index k = m.rows();
  Vector scale(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    if (!(m(i, i) > 0.0)) {
      throw SingularCurvature(which, std::numeric_limits<double>::infinity());
    }
    scale[i] = 1.0 / std::sqrt(m(i, i));
  }
  const Matrix ms = scale.asDiagonal() * m * scale.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Matrix> es(ms);
  const double lmax = es.eigenvalues().cwiseAbs().maxCoeff();
  const double lmin = es.eigenvalues().minCoeff();
  if (!(lmin > 0.0) || lmax / lmin > kConditionLimit) {
    throw SingularCurvature(which, lmin > 0.0 ? lmax / lmin
                                              : std::numeric_limits<double>::infinity());
  }
  const Matrix inv_s = es.eigenvectors() *
                       es.eigenvalues().cwiseInverse().asDiagonal() *
                       es.eigenvectors().transpose();
  return scale.asDiagonal() * inv_s * scale.asDiagonal();
}

Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

}  // namespace

Matrix residuals(const Dataset& data, const ParamVector& beta_hat) {
  Matrix eps(data.n(), data.p());
  for (int i = 0; i < data.n(); ++i) {
    SymMatrix c = model::eval(data.family, beta_hat, data.X[i]);
    try {
      numkit::SqrtPair pair = numkit::sym_sqrt_pair(c);
      eps.row(i) = (pair.inv_sqrt.mat() * data.Y.row(i).transpose()).transpose();
    } catch (const NotPositiveDefinite& e) {
      throw NotPositiveDefinite(e.lambda_min(), i);
    }
  }
  return eps;
}

AvarEstimate avar_qmle(const Dataset& data, const ParamVector& beta_hat) {
  const int K = data.family.K;
  const int p = data.p();
  const double np = static_cast<double>(data.n()) * p;
  Matrix v = Matrix::Zero(K, K);
  Matrix omega = Matrix::Zero(K, K);
  std::vector<Matrix> a(K);
  for (int i = 0; i < data.n(); ++i) {
    numkit::SqrtPair pair;
    try {
      pair = numkit::sym_sqrt_pair(model::eval(data.family, beta_hat, data.X[i]));
    } catch (const NotPositiveDefinite& e) {
      throw NotPositiveDefinite(e.lambda_min(), i);
    }
    const Matrix& si = pair.inv_sqrt.mat();
    Vector eps = si * data.Y.row(i).transpose();
    Vector kurt = eps.array().pow(4) - 3.0;
    for (int k = 0; k < K; ++k) {
      a[k] = 0.5 * si * model::grad(data.family, beta_hat, data.X[i], k).mat() * si;
    }
    for (int k1 = 0; k1 < K; ++k1) {
      for (int k2 = k1; k2 < K; ++k2) {
        const double tr = a[k1].cwiseProduct(a[k2].transpose()).sum();
        const double om = kurt.dot(a[k1].diagonal().cwiseProduct(a[k2].diagonal()));
        v(k1, k2) += 2.0 * tr;
        omega(k1, k2) += om;
        if (k2 != k1) {
          v(k2, k1) = v(k1, k2);
          omega(k2, k1) = omega(k1, k2);
        }
      }
    }
  }
  v /= np;
  omega /= np;
  AvarEstimate out;
  out.v_hat = symmetrize(v);
  out.omega_hat = symmetrize(omega);
  const Matrix vinv = inverse_via_eigen(out.v_hat, "V");
  out.avar = symmetrize(vinv + vinv * out.omega_hat * vinv);
  out.estimator = EstimatorKind::QMLE;
  return out;
}

AvarEstimate avar_wls(const Dataset& data, const ParamVector& beta_hat,
                      const std::vector<Weight>& weights) {
  if (static_cast<int>(weights.size()) != data.n()) {
    throw DimensionMismatch("one weight per observation required");
  }
  const int K = data.family.K;
  const double np = static_cast<double>(data.n()) * data.p();
  Matrix v = Matrix::Zero(K, K);
  Matrix omega = Matrix::Zero(K, K);
  Matrix m = Matrix::Zero(K, K);
  std::vector<Matrix> a(K);
  std::vector<Matrix> wd(K);
  for (int i = 0; i < data.n(); ++i) {
    numkit::SqrtPair pair;
    try {
      pair = numkit::sym_sqrt_pair(model::eval(data.family, beta_hat, data.X[i]));
    } catch (const NotPositiveDefinite& e) {
      throw NotPositiveDefinite(e.lambda_min(), i);
    }
    const Matrix& s = pair.sqrt.mat();
    Vector eps = pair.inv_sqrt.mat() * data.Y.row(i).transpose();
    Vector kurt = eps.array().pow(4) - 3.0;
    std::vector<Matrix> d(K);
    for (int k = 0; k < K; ++k) {
      d[k] = model::grad(data.family, beta_hat, data.X[i], k).mat();
      wd[k] = symmetrize(weights[i].apply_sym(d[k]));
      a[k] = s * wd[k] * s;
    }
    for (int k1 = 0; k1 < K; ++k1) {
      for (int k2 = k1; k2 < K; ++k2) {
        const double tr = a[k1].cwiseProduct(a[k2].transpose()).sum();
        const double om = kurt.dot(a[k1].diagonal().cwiseProduct(a[k2].diagonal()));
        const double mm = d[k1].cwiseProduct(wd[k2]).sum();
        v(k1, k2) += 2.0 * tr;
        omega(k1, k2) += om;
        m(k1, k2) += mm;
        if (k2 != k1) {
          v(k2, k1) = v(k1, k2);
          omega(k2, k1) = omega(k1, k2);
          m(k2, k1) = m(k1, k2);
        }
      }
    }
  }
  v /= np;
  omega /= np;
  m /= np;
  AvarEstimate out;
  out.v_hat = symmetrize(v);
  out.omega_hat = symmetrize(omega);
  out.m_hat = symmetrize(m);
  const Matrix minv = inverse_via_eigen(out.m_hat, "M");
  out.avar = symmetrize(minv * (out.v_hat + out.omega_hat) * minv);
  out.estimator = EstimatorKind::WLS;
  return out;
}

AvarEstimate avar_wls(const Dataset& data, const ParamVector& beta_hat,
                      const WeightSpec& weight) {
  return avar_wls(data, beta_hat, condvar::build_weights(weight, data));
}

std::vector<ConfidenceInterval> confint(const FitResult& fit,
                                        const AvarEstimate& avar, double level,
                                        int n, int p) {
  if (!(level > 0.0 && level < 1.0)) {
    throw ValidationError("level", "confidence level must lie in (0,1)");
  }
  const double z = numkit::normal_quantile(0.5 * (1.0 + level));
  const double np = static_cast<double>(n) * p;
  std::vector<ConfidenceInterval> out(fit.beta.size());
  for (Eigen::Index k = 0; k < fit.beta.size(); ++k) {
    const double var = std::max(avar.avar(k, k), 0.0);
    const double half = z * std::sqrt(var / np);
    out[k] = {fit.beta[k] - half, fit.beta[k] + half};
  }
  return out;
}

std::pair<double, double> cov_errors_vs(const Dataset& data,
                                        const ParamVector& beta_hat,
                                        const std::vector<SymMatrix>& truth) {
  if (truth.size() != data.X.size()) {
    throw DimensionMismatch("one true covariance per observation required");
  }
  const double p = data.p();
  double s_err = 0.0;
  double f_err = 0.0;
  for (int i = 0; i < data.n(); ++i) {
    const Matrix diff =
        model::eval(data.family, beta_hat, data.X[i]).mat() - truth[i].mat();
    s_err = std::max(s_err, numkit::spectral_norm_sym(diff));
    f_err = std::max(f_err, diff.norm() / std::sqrt(p));
  }
  // Scaled Frobenius norm never exceeds sqrt(p) times the spectral norm.
  if (f_err > std::sqrt(p) * s_err * (1.0 + 1e-12) + 1e-300) {
    throw Error("norm inequality violated in cov_errors");
  }
  return {s_err, f_err};
}

std::pair<double, double> cov_errors(const Dataset& data,
                                     const ParamVector& beta_hat,
                                     const ParamVector& beta0) {
  std::vector<SymMatrix> truth;
  truth.reserve(data.X.size());
  for (const CovariateSet& x : data.X) {
    truth.push_back(model::eval(data.family, beta0, x));
  }
  return cov_errors_vs(data, beta_hat, truth);
}

}  // namespace inference
}  // namespace covreg
