#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "covreg/estimate.hpp"
#include "covreg/simulate.hpp"
#include "support.hpp"

using namespace covreg;
using namespace covreg::testsupport;

namespace {

Dataset scalar_dataset(std::initializer_list<double> ys) {
  Dataset d;
  d.family = ModelFamily{FamilyKind::Linear, 1, 1};
  d.Y = Matrix(static_cast<Eigen::Index>(ys.size()), 1);
  Eigen::Index i = 0;
  for (double y : ys) {
    CovariateSet x;
    x.family = FamilyKind::Linear;
    x.designs.push_back(SymMatrix::identity(1));
    d.X.push_back(std::move(x));
    d.Y(i++, 0) = y;
  }
  return d;
}

ParamVector scalar_beta(double b) {
  ParamVector v(1);
  v << b;
  return v;
}

}  // namespace

TEST_CASE("loglik: scalar specialization") {
  Dataset d = scalar_dataset({1.5});
  const double beta = 0.8;
  const double expect = -0.5 * std::log(2.0 * M_PI) - 0.5 * std::log(beta) -
                        1.5 * 1.5 / (2.0 * beta);
  CHECK(estimate::loglik(d, scalar_beta(beta)) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("loglik: C = I and Y = 0 gives -(np/2) log 2pi") {
  Dataset d;
  d.family = ModelFamily{FamilyKind::Linear, 1, 3};
  for (int i = 0; i < 4; ++i) {
    CovariateSet x;
    x.family = FamilyKind::Linear;
    x.designs.push_back(SymMatrix::identity(3));
    d.X.push_back(std::move(x));
  }
  d.Y = Matrix::Zero(4, 3);
  CHECK(estimate::loglik(d, scalar_beta(1.0)) ==
        doctest::Approx(-6.0 * std::log(2.0 * M_PI)).epsilon(1e-13));
}

TEST_CASE("loglik agrees with a dense-determinant reference") {
  auto g = rng(41);
  for (int trial = 0; trial < 10; ++trial) {
    ParamVector beta;
    Dataset d = random_linear_dataset(6, 4, 3, g, &beta);
    double ref = -0.5 * 6 * 4 * std::log(2.0 * M_PI);
    for (int i = 0; i < d.n(); ++i) {
      Matrix c = model::eval(d.family, beta, d.X[i]).mat();
      ref += -0.5 * std::log(c.determinant()) -
             0.5 * d.Y.row(i) * c.inverse() * d.Y.row(i).transpose();
    }
    const double got = estimate::loglik(d, beta);
    CHECK(std::abs(got - ref) < 1e-10 * std::max(1.0, std::abs(ref)));
  }
}

TEST_CASE("loglik names the offending observation") {
  Dataset d = scalar_dataset({1.0, 2.0});
  try {
    estimate::loglik(d, scalar_beta(-1.0));
    CHECK(false);
  } catch (const NotPositiveDefinite& e) {
    CHECK(e.observation() == 0);
  }
}

TEST_CASE("score: scalar model zero at the mean of squares") {
  Dataset d = scalar_dataset({1.0, 2.0, 0.5});
  const double bhat = (1.0 + 4.0 + 0.25) / 3.0;
  CHECK(estimate::score(d, scalar_beta(bhat))[0] == doctest::Approx(0.0).epsilon(1e-12));
  // Analytic form 0.5 sum (y^2 / b^2 - 1/b).
  const double b = 0.9;
  const double expect = 0.5 * ((1.0 + 4.0 + 0.25) / (b * b) - 3.0 / b);
  CHECK(estimate::score(d, scalar_beta(b))[0] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("score matches central finite differences of loglik") {
  auto g = rng(42);
  for (int trial = 0; trial < 10; ++trial) {
    ParamVector beta;
    Dataset d = random_linear_dataset(5, 3, 3, g, &beta);
    Vector s = estimate::score(d, beta);
    for (int k = 0; k < 3; ++k) {
      const double h = 1e-6 * (1.0 + std::abs(beta[k]));
      ParamVector bp = beta, bm = beta;
      bp[k] += h;
      bm[k] -= h;
      const double fd =
          (estimate::loglik(d, bp) - estimate::loglik(d, bm)) / (2.0 * h);
      CHECK(std::abs(fd - s[k]) < 1e-6 * std::max(1.0, std::abs(s[k])));
    }
  }
}

TEST_CASE("score has Monte Carlo mean near zero at the truth") {
  const int reps = 2000, n = 10, p = 3;
  ParamVector beta0 = scalar_beta(2.0);
  Vector mean = Vector::Zero(1);
  ErrorLaw law{ErrorLawKind::StandardNormal};
  ModelFamily fam{FamilyKind::Linear, 1, p};
  for (int r = 0; r < reps; ++r) {
    std::mt19937_64 g = simulate::make_stream(55, r, simulate::Purpose::TrainNoise);
    Dataset d;
    d.family = fam;
    d.Y = Matrix(n, p);
    for (int i = 0; i < n; ++i) {
      CovariateSet x;
      x.family = FamilyKind::Linear;
      x.designs.push_back(SymMatrix::identity(p));
      d.X.push_back(std::move(x));
      d.Y.row(i) = simulate::draw_response(fam, beta0, d.X[i], law, g).transpose();
    }
    mean += estimate::score(d, beta0) / (n * p);
  }
  mean /= reps;
  // SD of score/(np) is about 1/(beta0 sqrt(2 np)) ~ 0.064; 4 SE over 2000 reps.
  CHECK(std::abs(mean[0]) < 4.0 * 0.065 / std::sqrt(double(reps)));
}

TEST_CASE("fit_qmle: scalar closed form") {
  Dataset d = scalar_dataset({1.0, 2.0});
  FitResult fit = estimate::fit_qmle(d);
  CHECK(fit.beta[0] == doctest::Approx(2.5).epsilon(1e-7));
  CHECK(fit.converged);
}

TEST_CASE("fit_qmle converges in few iterations from the truth") {
  auto g = rng(43);
  ParamVector beta;
  Dataset d = random_linear_dataset(40, 4, 3, g, &beta);
  FitOptions opts;
  opts.start = beta;
  FitResult fit = estimate::fit_qmle(d, opts);
  CHECK(fit.converged);
  CHECK(fit.iters <= 12);
  CHECK((fit.beta - beta).cwiseAbs().maxCoeff() < 0.8);
}

TEST_CASE("fit_qmle recovers network parameters") {
  auto g = rng(44);
  Dataset d = network_dataset(300, 8, 0.45, 1.5, g);
  FitResult fit = estimate::fit_qmle(d);
  CHECK(fit.converged);
  CHECK(fit.beta[0] == doctest::Approx(0.45).epsilon(0.2));
  CHECK(fit.beta[1] == doctest::Approx(1.5).epsilon(0.2));
}

TEST_CASE("fit_wls: OLS closed form on the scalar toy") {
  Dataset d = scalar_dataset({1.0, 2.0});
  FitResult fit = estimate::fit_ols(d);
  CHECK(fit.beta[0] == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(fit.estimator == EstimatorKind::OLS);
  CHECK(fit.converged);
}

TEST_CASE("OLS equals the displayed trace form") {
  auto g = rng(45);
  ParamVector beta;
  Dataset d = random_linear_dataset(12, 4, 3, g, &beta);
  FitResult fit = estimate::fit_ols(d);
  const int K = 3;
  Matrix gram(K, K);
  Vector rhs(K);
  for (int k1 = 0; k1 < K; ++k1) {
    double b = 0.0;
    for (int i = 0; i < d.n(); ++i) {
      b += d.Y.row(i) * d.X[i].designs[k1].mat() * d.Y.row(i).transpose();
    }
    rhs[k1] = b;
    for (int k2 = 0; k2 < K; ++k2) {
      double t = 0.0;
      for (int i = 0; i < d.n(); ++i) {
        t += (d.X[i].designs[k1].mat() * d.X[i].designs[k2].mat()).trace();
      }
      gram(k1, k2) = t;
    }
  }
  Vector ref = gram.ldlt().solve(rhs);
  CHECK((fit.beta - ref).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("closed form equals the numeric minimizer") {
  auto g = rng(46);
  for (int trial = 0; trial < 5; ++trial) {
    ParamVector beta;
    Dataset d = random_linear_dataset(15, 3, 3, g, &beta);
    FitOptions direct;
    direct.constrain_pd = false;
    FitResult closed = estimate::fit_wls(d, WeightSpec::identity(), direct);
    FitOptions iter = direct;
    iter.force_iterative = true;
    iter.max_iters = 500;
    iter.grad_tol = 1e-9;
    iter.start = beta;
    FitResult numeric = estimate::fit_wls(d, WeightSpec::identity(), iter);
    CHECK((closed.beta - numeric.beta).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("residual orthogonality at the closed form") {
  auto g = rng(47);
  ParamVector beta;
  Dataset d = random_linear_dataset(10, 3, 2, g, &beta);
  FitResult fit = estimate::fit_ols(d);
  Vector resid = Vector::Zero(2);
  for (int i = 0; i < d.n(); ++i) {
    Matrix r = d.Y.row(i).transpose() * d.Y.row(i) -
               model::eval(d.family, fit.beta, d.X[i]).mat();
    for (int k = 0; k < 2; ++k) {
      resid[k] += d.X[i].designs[k].mat().cwiseProduct(r).sum();
    }
  }
  CHECK(resid.cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("OLS equivariance: scaling Y by c scales beta by c^2") {
  auto g = rng(48);
  ParamVector beta;
  Dataset d = random_linear_dataset(10, 3, 2, g, &beta);
  FitOptions opts;
  opts.constrain_pd = false;
  FitResult base = estimate::fit_ols(d, opts);
  Dataset scaled = d;
  scaled.Y *= 3.0;
  FitResult s = estimate::fit_ols(scaled, opts);
  CHECK((s.beta - 9.0 * base.beta).cwiseAbs().maxCoeff() <
        1e-8 * base.beta.cwiseAbs().maxCoeff() * 9.0);
}

TEST_CASE("K = 1 identity design: OLS, GLS, FGLS coincide") {
  Dataset d = scalar_dataset({1.0, 2.0, 3.0, 0.5});
  FitResult ols = estimate::fit_ols(d);
  FitResult gls = estimate::fit_gls(d, scalar_beta(1.6), ErrorMoments::pooled(3.0));
  FitResult fgls = estimate::fit_fgls(d);
  CHECK(ols.beta[0] == doctest::Approx(gls.beta[0]).epsilon(1e-9));
  CHECK(ols.beta[0] == doctest::Approx(fgls.beta[0]).epsilon(1e-9));
  CHECK(gls.estimator == EstimatorKind::GLS);
  CHECK(fgls.estimator == EstimatorKind::FGLS);
  CHECK(fgls.weight_used.kind == WeightSpec::Kind::EstimatedV);
}

TEST_CASE("GLS bias is near zero on a small Model A study") {
  const int reps = 120, n = 50, p = 5;
  ParamVector beta0 = simulate::default_beta0();
  ErrorLaw law{ErrorLawKind::NormalMixture};
  ModelFamily fam{FamilyKind::Linear, 5, p};
  Vector mean = Vector::Zero(5);
  int ok = 0;
  for (int r = 0; r < reps; ++r) {
    std::mt19937_64 xg = simulate::make_stream(91, r, simulate::Purpose::TrainCovariates);
    std::mt19937_64 ng = simulate::make_stream(91, r, simulate::Purpose::TrainNoise);
    Dataset d;
    d.family = fam;
    d.X = simulate::gen_model_a(n, p, xg);
    d.Y = Matrix(n, p);
    for (int i = 0; i < n; ++i) {
      d.Y.row(i) = simulate::draw_response(fam, beta0, d.X[i], law, ng).transpose();
    }
    FitResult fit = estimate::fit_gls(d, beta0, law.moments());
    mean += fit.beta;
    ++ok;
  }
  mean /= ok;
  Vector bias = mean - beta0;
  for (int k = 0; k < 5; ++k) CHECK(std::abs(bias[k]) < 0.25);
}

TEST_CASE("FGLS tracks GLS on a large sample") {
  std::mt19937_64 xg = simulate::make_stream(92, 0, simulate::Purpose::TrainCovariates);
  std::mt19937_64 ng = simulate::make_stream(92, 0, simulate::Purpose::TrainNoise);
  const int n = 400, p = 5;
  ParamVector beta0 = simulate::default_beta0();
  ErrorLaw law{ErrorLawKind::StandardNormal};
  Dataset d;
  d.family = ModelFamily{FamilyKind::Linear, 5, p};
  d.X = simulate::gen_model_a(n, p, xg);
  d.Y = Matrix(n, p);
  for (int i = 0; i < n; ++i) {
    d.Y.row(i) = simulate::draw_response(d.family, beta0, d.X[i], law, ng).transpose();
  }
  FitResult gls = estimate::fit_gls(d, beta0, law.moments());
  FitResult fgls = estimate::fit_fgls(d);
  CHECK((gls.beta - fgls.beta).cwiseAbs().maxCoeff() < 0.3);
}

TEST_CASE("underdetermined fits are rejected") {
  auto g = rng(49);
  Dataset d = random_linear_dataset(1, 2, 5, g);
  CHECK_THROWS_AS(estimate::fit_ols(d), Underdetermined);
}

TEST_CASE("collinear designs raise SingularNormalEquations") {
  Dataset d;
  d.family = ModelFamily{FamilyKind::Linear, 2, 2};
  for (int i = 0; i < 4; ++i) {
    CovariateSet x;
    x.family = FamilyKind::Linear;
    x.designs.push_back(SymMatrix::identity(2));
    x.designs.push_back(SymMatrix::identity(2));  // duplicate column
    d.X.push_back(std::move(x));
  }
  d.Y = Matrix::Ones(4, 2);
  FitOptions opts;
  opts.constrain_pd = false;
  CHECK_THROWS_AS(estimate::fit_ols(d, opts), SingularNormalEquations);
}

TEST_CASE("constrained and unconstrained fits coincide away from the boundary") {
  auto g = rng(50);
  ParamVector beta;
  Dataset d = random_linear_dataset(60, 4, 3, g, &beta);
  FitOptions on;
  on.constrain_pd = true;
  FitOptions off;
  off.constrain_pd = false;
  FitResult a = estimate::fit_qmle(d, on);
  FitResult b = estimate::fit_qmle(d, off);
  CHECK((a.beta - b.beta).cwiseAbs().maxCoeff() < 1e-6);
  CHECK_FALSE(a.constrained_active);
}

TEST_CASE("constrained WLS respects the positive definiteness floor") {
  // A lopsided diagonal design: C = b1 diag(1, 0.2) + b2 offdiag is positive
  // definite only while |b2| < sqrt(0.2) b1, and the responses below push the
  // unconstrained optimum past that edge.
  Dataset d;
  d.family = ModelFamily{FamilyKind::Linear, 2, 2};
  Matrix diag1(2, 2), off(2, 2);
  diag1 << 1, 0, 0, 0.2;
  off << 0, 1, 1, 0;
  for (int i = 0; i < 2; ++i) {
    CovariateSet x;
    x.family = FamilyKind::Linear;
    x.designs.push_back(SymMatrix(diag1));
    x.designs.push_back(SymMatrix(off));
    d.X.push_back(std::move(x));
  }
  d.Y = Matrix(2, 2);
  d.Y << 1.0, 0.9, -1.0, -0.9;
  FitOptions off_opts;
  off_opts.constrain_pd = false;
  FitResult un = estimate::fit_ols(d, off_opts);
  const double lmin_un = model::min_cov_eigenvalue(d.family, un.beta, d.X);
  REQUIRE(lmin_un < 0.0);  // the unconstrained fit is infeasible here

  FitOptions on_opts;
  on_opts.constrain_pd = true;
  on_opts.max_iters = 500;
  on_opts.on_nonconvergence = FitOptions::OnNonconvergence::Return;
  FitResult c = estimate::fit_ols(d, on_opts);
  const double lmin = model::min_cov_eigenvalue(d.family, c.beta, d.X);
  CHECK(lmin >= on_opts.constraint_floor * 0.999);
  CHECK(c.constrained_active);
  // The constrained objective cannot beat the unconstrained optimum.
  std::vector<Weight> id(d.n(), Weight::identity(2));
  CHECK(estimate::wls_objective(d, id, c.beta) >=
        estimate::wls_objective(d, id, un.beta) - 1e-12);
}
