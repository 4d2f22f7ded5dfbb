#include "covreg/assess.hpp"

#include "covreg/inference.hpp"

#include <cmath>
#include <limits>

namespace covreg {
namespace assess {

namespace {

constexpr double kConditionLimit = 1e12;

Matrix solve_spd(const Matrix& g, const Matrix& rhs, int fold) {
  Eigen::LLT<Matrix> llt(g);
  if (llt.info() != Eigen::Success) throw SingularGram(fold);
  return llt.solve(rhs);
}

void check_weights(const Dataset& data, const std::vector<Weight>& weights) {
  if (static_cast<int>(weights.size()) != data.n()) {
    throw DimensionMismatch("one weight per observation required");
  }
}

}  // namespace

WeightedLinearData prepare_weighted_design(
    const Dataset& data, const std::vector<Weight>& weights,
    const std::vector<condvar::CondCov>& v_source) {
  if (data.family.kind != FamilyKind::Linear) {
    throw ValidationError("family", "the U statistic requires a linear family");
  }
  check_weights(data, weights);
  if (v_source.size() != weights.size()) {
    throw DimensionMismatch("one conditional covariance per observation required");
  }
  const int K = data.family.K;
  WeightedLinearData wd;
  wd.n = data.n();
  wd.K = K;
  wd.g.reserve(wd.n);
  wd.h.reserve(wd.n);
  for (int i = 0; i < wd.n; ++i) {
    const CovariateSet& x = data.X[i];
    std::vector<Matrix> wdk(K), vwdk(K);
    for (int k = 0; k < K; ++k) {
      wdk[k] = weights[i].apply_sym(x.designs[k].mat());
      vwdk[k] = v_source[i].apply_sym(0.5 * (wdk[k] + wdk[k].transpose()));
    }
    Matrix g(K, K), h(K, K);
    for (int k1 = 0; k1 < K; ++k1) {
      for (int k2 = 0; k2 < K; ++k2) {
        g(k1, k2) = x.designs[k1].mat().cwiseProduct(wdk[k2]).sum();
        h(k1, k2) = wdk[k1].cwiseProduct(vwdk[k2]).sum();
      }
    }
    wd.g.push_back(0.5 * (g + g.transpose()));
    wd.h.push_back(0.5 * (h + h.transpose()));
  }
  return wd;
}

double train_error(const Dataset& data, const std::vector<Weight>& weights,
                   const ParamVector& beta_hat) {
  check_weights(data, weights);
  return estimate::wls_objective(data, weights, beta_hat);
}

double test_error(const Dataset& test_data, const std::vector<Weight>& weights,
                  const ParamVector& beta_hat) {
  check_weights(test_data, weights);
  return estimate::wls_objective(test_data, weights, beta_hat);
}

double u_stat(const WeightedLinearData& wd) {
  Matrix g = Matrix::Zero(wd.K, wd.K);
  Matrix h = Matrix::Zero(wd.K, wd.K);
  for (int i = 0; i < wd.n; ++i) {
    g += wd.g[i];
    h += wd.h[i];
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(g);
  const double lmin = es.eigenvalues().minCoeff();
  const double lmax = es.eigenvalues().cwiseAbs().maxCoeff();
  if (!(lmin > 0.0) || lmax / lmin > kConditionLimit) throw SingularGram();
  const Matrix ginv = es.eigenvectors() *
                      es.eigenvalues().cwiseInverse().asDiagonal() *
                      es.eigenvectors().transpose();
  return 2.0 / wd.n * (ginv * h).trace();
}

double vtilde_err_r(const WeightedLinearData& wd) {
  if (wd.n < wd.K + 1) {
    throw ValidationError("n", "leave-one-out requires n >= K + 1");
  }
  double total = 0.0;
  for (int i = 0; i < wd.n; ++i) {
    Matrix g = Matrix::Zero(wd.K, wd.K);
    Matrix h = Matrix::Zero(wd.K, wd.K);
    for (int j = 0; j < wd.n; ++j) {
      if (j == i) continue;
      g += wd.g[j];
      h += wd.h[j];
    }
    Eigen::LLT<Matrix> llt(g);
    if (llt.info() != Eigen::Success) throw SingularGram(i);
    const Matrix t = llt.solve(h);                    // G^{-1} H
    const Matrix u = llt.solve(wd.g[i].transpose());  // G^{-1} G_i
    total += (t * u).trace();
  }
  return total / wd.n;
}

double ocv(const Dataset& data, const std::vector<Weight>& weights,
           const AssessOptions& opts) {
  check_weights(data, weights);
  const int n = data.n();
  const int K = data.family.K;
  if (n < K + 1) {
    throw ValidationError("n", "leave-one-out requires n >= K + 1");
  }

  std::vector<double> terms(n);
  if (data.family.kind == FamilyKind::Linear) {
    // Per-observation normal equation pieces; each fold solves the K x K
    // system with observation i removed.
    std::vector<Matrix> g(n);
    std::vector<Vector> b(n);
    for (int i = 0; i < n; ++i) {
      const CovariateSet& x = data.X[i];
      std::vector<Matrix> wdk(K);
      for (int k = 0; k < K; ++k) {
        wdk[k] = weights[i].apply_sym(x.designs[k].mat());
      }
      g[i] = Matrix(K, K);
      for (int k1 = 0; k1 < K; ++k1) {
        for (int k2 = 0; k2 < K; ++k2) {
          g[i](k1, k2) = x.designs[k1].mat().cwiseProduct(wdk[k2]).sum();
        }
      }
      g[i] = 0.5 * (g[i] + g[i].transpose()).eval();
      const Matrix r = data.Y.row(i).transpose() * data.Y.row(i);
      const Matrix wr = weights[i].apply_sym(r);
      b[i] = Vector(K);
      for (int k = 0; k < K; ++k) {
        b[i][k] = x.designs[k].mat().cwiseProduct(wr).sum();
      }
    }
    for (int i = 0; i < n; ++i) {
      Matrix gram = Matrix::Zero(K, K);
      Vector rhs = Vector::Zero(K);
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        gram += g[j];
        rhs += b[j];
      }
      const Vector beta = solve_spd(gram, rhs, i);
      const Matrix resid = data.Y.row(i).transpose() * data.Y.row(i) -
                           model::eval(data.family, beta, data.X[i]).mat();
      terms[i] = weights[i].quadform_sym(resid);
    }
  } else {
    for (int i = 0; i < n; ++i) {
      Dataset fold;
      fold.family = data.family;
      fold.Y = Matrix(n - 1, data.p());
      fold.X.reserve(n - 1);
      std::vector<Weight> fold_w;
      fold_w.reserve(n - 1);
      int r = 0;
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        fold.X.push_back(data.X[j]);
        fold.Y.row(r++) = data.Y.row(j);
        fold_w.push_back(weights[j]);
      }
      FitOptions fo = opts.fold_fit;
      fo.on_nonconvergence = FitOptions::OnNonconvergence::Throw;
      ParamVector beta;
      try {
        beta = estimate::fit_wls_with_weights(fold, fold_w, fo).beta;
      } catch (const Error& e) {
        throw FoldFailed(i, e.what());
      }
      const Matrix resid = data.Y.row(i).transpose() * data.Y.row(i) -
                           model::eval(data.family, beta, data.X[i]).mat();
      terms[i] = weights[i].quadform_sym(resid);
    }
  }
  double total = 0.0;
  for (int i = 0; i < n; ++i) total += terms[i];
  return total / n;
}

double ocv(const Dataset& data, const WeightSpec& spec,
           const AssessOptions& opts) {
  if (!(opts.refit_weight_per_fold && spec.kind == WeightSpec::Kind::EstimatedV)) {
    if (spec.kind == WeightSpec::Kind::EstimatedV && !spec.resolved()) {
      // Resolve once from the full data, then hold the weight fixed.
      FitOptions fo = opts.fold_fit;
      fo.on_nonconvergence = FitOptions::OnNonconvergence::Throw;
      FitResult pilot = estimate::fit_ols(data, fo);
      WeightSpec resolved = spec;
      resolved.beta_for_v = pilot.beta;
      resolved.moments = condvar::estimate_mu4(inference::residuals(data, pilot.beta));
      return ocv(data, condvar::build_weights(resolved, data), opts);
    }
    return ocv(data, condvar::build_weights(spec, data), opts);
  }
  const int n = data.n();
  if (n < data.family.K + 1) {
    throw ValidationError("n", "leave-one-out requires n >= K + 1");
  }
  std::vector<double> terms(n);
  for (int i = 0; i < n; ++i) {
    Dataset fold;
    fold.family = data.family;
    fold.Y = Matrix(n - 1, data.p());
    fold.X.reserve(n - 1);
    int r = 0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      fold.X.push_back(data.X[j]);
      fold.Y.row(r++) = data.Y.row(j);
    }
    try {
      FitOptions fo = opts.fold_fit;
      fo.on_nonconvergence = FitOptions::OnNonconvergence::Throw;
      FitResult pilot = estimate::fit_ols(fold, fo);
      WeightSpec resolved = spec;
      resolved.beta_for_v = pilot.beta;
      resolved.moments =
          condvar::estimate_mu4(inference::residuals(fold, pilot.beta));
      FitResult refit = estimate::fit_wls(fold, resolved, fo);
      const Weight wi = condvar::build_weight(resolved, data.family, data.X[i]);
      const Matrix resid = data.Y.row(i).transpose() * data.Y.row(i) -
                           model::eval(data.family, refit.beta, data.X[i]).mat();
      terms[i] = wi.quadform_sym(resid);
    } catch (const Error& e) {
      throw FoldFailed(i, e.what());
    }
  }
  double total = 0.0;
  for (int i = 0; i < n; ++i) total += terms[i];
  return total / n;
}

AssessmentReport assess_linear(const Dataset& data, const FitResult& fit,
                               const std::vector<Weight>& weights,
                               const std::vector<condvar::CondCov>& v_source,
                               bool estimated_v, const AssessOptions& opts) {
  AssessmentReport rep;
  rep.weight_kind = fit.weight_used.kind;
  rep.estimated_v = estimated_v;
  rep.train_error = train_error(data, weights, fit.beta);
  WeightedLinearData wd = prepare_weighted_design(data, weights, v_source);
  rep.u = u_stat(wd);
  rep.cp = rep.train_error + rep.u;
  rep.vtilde_err_r = vtilde_err_r(wd);
  rep.rcp = rep.train_error + 0.5 * rep.u + rep.vtilde_err_r;
  // Algebraic identity RCp - Cp = Vtilde - U/2 up to rounding.
  const double lhs = rep.rcp - rep.cp;
  const double rhs = rep.vtilde_err_r - 0.5 * rep.u;
  if (std::abs(lhs - rhs) >
      1e-10 * std::max(1.0, std::abs(rep.rcp) + std::abs(rep.cp))) {
    throw Error("RCp/Cp identity violated");
  }
  if (opts.with_ocv) rep.ocv = ocv(data, weights, opts);
  return rep;
}

}  // namespace assess
}  // namespace covreg
